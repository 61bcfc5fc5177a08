//! Deterministic dense-network engine.

pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod optim;
pub mod stack;

pub use gradcheck::{grad_check, grad_check_range, GradCheckReport, ParamVector, Probe};
pub use loss::{log_sum_exp, softmax, softmax_cross_entropy};
pub use matrix::Matrix;
pub use optim::{nesterov_step, nesterov_update, OptimizerState};
pub use stack::{Activation, DropoutSpec, Grads, Layer, LayerGrad, LayerSpec, Mode, NetStack, Trace};
