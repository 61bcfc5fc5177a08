//! Encoder trunk with a regular-label branch and a private-label branch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::nn::stack::apply_mask;
use crate::nn::{Activation, DropoutSpec, Matrix, Mode, NetStack, ParamVector, Trace};

/// Hidden-layer widths of the three stacks. The encoder's last width is the
/// representation size; each branch appends a softmax output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub encoder: Vec<usize>,
    pub regular: Vec<usize>,
    pub private: Vec<usize>,
}

impl Architecture {
    /// Desk-scale default: encoder 4×256, branches 2×128.
    pub fn reduced() -> Self {
        Self {
            encoder: vec![256; 4],
            regular: vec![128; 2],
            private: vec![128; 2],
        }
    }

    /// Pen-digits geometry: 8 encoder layers and 3-layer branches, 700 units each.
    pub fn full_scale() -> Self {
        Self {
            encoder: vec![700; 8],
            regular: vec![700; 2],
            private: vec![700; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() {
            return Err(config("encoder needs at least one layer"));
        }
        if [&self.encoder, &self.regular, &self.private]
            .iter()
            .any(|w| w.contains(&0))
        {
            return Err(config("layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriNet {
    pub encoder: NetStack,
    pub regular: NetStack,
    pub private: NetStack,
}

/// Forward trace of all three stacks on one batch. When dropout is active on
/// hidden units the representation `U` is masked once and the same masked `U`
/// feeds both branches.
#[derive(Debug, Clone)]
pub struct TriTrace {
    pub encoder: Trace,
    pub u_mask: Option<Matrix>,
    pub regular: Trace,
    pub private: Trace,
}

impl TriTrace {
    pub fn representation(&self) -> &Matrix {
        self.encoder.output()
    }

    pub fn regular_probs(&self) -> &Matrix {
        self.regular.output()
    }

    pub fn private_probs(&self) -> &Matrix {
        self.private.output()
    }

    pub fn regular_logits(&self) -> &Matrix {
        self.regular.pre_activations.last().expect("non-empty branch")
    }

    pub fn private_logits(&self) -> &Matrix {
        self.private.pre_activations.last().expect("non-empty branch")
    }

    pub fn batch_size(&self) -> usize {
        self.encoder.batch_size()
    }
}

/// Evaluation-mode outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TriOutputs {
    pub representation: Matrix,
    pub regular: Matrix,
    pub private: Matrix,
}

fn branch_dropout(d: &DropoutSpec) -> DropoutSpec {
    DropoutSpec { on_input: false, ..*d }
}

impl TriNet {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        arch: &Architecture,
        n_regular: usize,
        n_private: usize,
        rng: &mut R,
    ) -> Result<Self> {
        arch.validate()?;
        if n_regular < 2 || n_private < 2 {
            return Err(config("label alphabets need at least two classes"));
        }
        let (last, hidden) = arch.encoder.split_last().expect("validated non-empty");
        let encoder = NetStack::mlp(input_dim, hidden, *last, Activation::Relu, rng)?;
        let regular = NetStack::mlp(*last, &arch.regular, n_regular, Activation::Softmax, rng)?;
        let private = NetStack::mlp(*last, &arch.private, n_private, Activation::Softmax, rng)?;
        Ok(Self {
            encoder,
            regular,
            private,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let u = self.encoder.output_dim();
        if self.regular.input_dim() != u || self.private.input_dim() != u {
            return Err(Error::Shape(format!(
                "encoder emits {u} units but branches expect {} and {}",
                self.regular.input_dim(),
                self.private.input_dim()
            )));
        }
        let last_softmax = |n: &NetStack| n.layers().last().map(|l| l.spec.activation) == Some(Activation::Softmax);
        if !last_softmax(&self.regular) || !last_softmax(&self.private) {
            return Err(Error::Shape("branches must end in a softmax".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn representation_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn n_regular(&self) -> usize {
        self.regular.output_dim()
    }

    pub fn n_private(&self) -> usize {
        self.private.output_dim()
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Matrix,
        dropout: &DropoutSpec,
        mode: Mode,
        rng: &mut R,
    ) -> Result<TriTrace> {
        let encoder = self.encoder.forward(x, dropout, mode, rng)?;
        let u = encoder.output();
        let (u_in, u_mask) = if mode == Mode::Train && dropout.p_out > 0.0 && dropout.on_hidden {
            let mask = dropout.draw_mask(u.rows(), u.cols(), rng);
            (apply_mask(u, &mask), Some(mask))
        } else {
            (u.clone(), None)
        };
        let bd = branch_dropout(dropout);
        let regular = self.regular.forward(&u_in, &bd, mode, rng)?;
        let private = self.private.forward(&u_in, &bd, mode, rng)?;
        Ok(TriTrace {
            encoder,
            u_mask,
            regular,
            private,
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<TriOutputs> {
        let representation = self.encoder.predict(x)?;
        let regular = self.regular.predict(&representation)?;
        let private = self.private.predict(&representation)?;
        Ok(TriOutputs {
            representation,
            regular,
            private,
        })
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.regular.param_count() + self.private.param_count()
    }

    fn split_index(&self, idx: usize) -> (usize, usize) {
        let e = self.encoder.param_count();
        let r = self.regular.param_count();
        if idx < e {
            (0, idx)
        } else if idx < e + r {
            (1, idx - e)
        } else {
            (2, idx - e - r)
        }
    }

    fn stack(&self, which: usize) -> &NetStack {
        match which {
            0 => &self.encoder,
            1 => &self.regular,
            _ => &self.private,
        }
    }

    fn stack_mut(&mut self, which: usize) -> &mut NetStack {
        match which {
            0 => &mut self.encoder,
            1 => &mut self.regular,
            _ => &mut self.private,
        }
    }
}

impl ParamVector for TriNet {
    fn n_params(&self) -> usize {
        self.param_count()
    }

    fn param_at(&self, idx: usize) -> f64 {
        let (s, i) = self.split_index(idx);
        self.stack(s).param(i)
    }

    fn set_param_at(&mut self, idx: usize, value: f64) {
        let (s, i) = self.split_index(idx);
        self.stack_mut(s).set_param(i, value)
    }

    fn param_label(&self, idx: usize) -> String {
        let (s, i) = self.split_index(idx);
        let group = ["encoder", "regular", "private"][s];
        format!("{group}.{}", self.stack(s).param_name(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_arch() -> Architecture {
        Architecture {
            encoder: vec![8, 6],
            regular: vec![5],
            private: vec![],
        }
    }

    #[test]
    fn geometry_follows_architecture() {
        let net = TriNet::new(10, &small_arch(), 3, 4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        net.validate().unwrap();
        assert_eq!(net.encoder.depth(), 2);
        assert_eq!(net.regular.depth(), 2);
        assert_eq!(net.private.depth(), 1);
        assert_eq!(net.representation_dim(), 6);
        assert_eq!((net.n_regular(), net.n_private()), (3, 4));
        let full = Architecture::full_scale();
        assert_eq!(full.encoder.len(), 8);
        assert_eq!(full.regular.len() + 1, 3);
    }

    #[test]
    fn eval_forward_matches_predict() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let net = TriNet::new(10, &small_arch(), 3, 4, &mut r).unwrap();
        let x = Matrix::filled(3, 10, 0.5);
        let t = net
            .forward(&x, &DropoutSpec::new(0.3, true, true), Mode::Eval, &mut r)
            .unwrap();
        let p = net.predict(&x).unwrap();
        assert_eq!(t.regular_probs(), &p.regular);
        assert_eq!(t.private_probs(), &p.private);
        assert!(t.u_mask.is_none());
    }

    #[test]
    fn flat_parameter_labels() {
        let net = TriNet::new(4, &small_arch(), 2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(net.param_label(0), "encoder.layer0.weight[0]");
        let e = net.encoder.param_count();
        assert_eq!(net.param_label(e), "regular.layer0.weight[0]");
        assert_eq!(net.param_label(net.param_count() - 1), "private.layer0.bias[1]");
    }
}
