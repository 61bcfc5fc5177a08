//! Minibatch SGD with Nesterov momentum.
//!
//! The lookahead form evaluates the gradient at `θ + σv`, then
//! `v ← σv − μg` and `θ ← θ + v`. We store the lookahead point `φ = θ + σv`
//! as the parameters instead, which turns the step into
//!
//! ```text
//! v ← σv − μ g(φ)
//! φ ← φ + σv − μ g(φ)
//! ```
//!
//! so callers simply differentiate at the stored parameters.

use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Result};
use crate::nn::stack::check_grads;
use crate::nn::{Grads, NetStack};

/// One Nesterov step on flat buffers.
pub fn nesterov_update(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * g;
        *p += momentum * *v - lr * g;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub velocity: Grads,
    pub lr: f64,
    pub momentum: f64,
}

impl OptimizerState {
    /// Zero velocity shaped like `net`.
    pub fn new(net: &NetStack, lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(config(format!("learning rate must be > 0, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self {
            velocity: Grads::zeros_like(net),
            lr,
            momentum,
        })
    }
}

pub fn nesterov_step(net: &mut NetStack, grads: &Grads, state: &mut OptimizerState) -> Result<()> {
    if !(state.lr > 0.0) {
        return Err(config(format!("learning rate must be > 0, got {}", state.lr)));
    }
    check_grads(net, grads)?;
    if state.velocity.layers.len() != grads.layers.len() {
        return Err(shape("optimizer state does not match the stack"));
    }
    let (lr, mom) = (state.lr, state.momentum);
    for ((layer, g), v) in net
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.velocity.layers.iter_mut())
    {
        if v.weight.shape() != g.weight.shape() || v.bias.len() != g.bias.len() {
            return Err(shape("optimizer velocity shape mismatch"));
        }
        nesterov_update(
            layer.weight.as_mut_slice(),
            g.weight.as_slice(),
            v.weight.as_mut_slice(),
            lr,
            mom,
        );
        nesterov_update(&mut layer.bias, &g.bias, &mut v.bias, lr, mom);
    }
    net.touch();
    Ok(())
}
