//! Stacks of affine layers with ReLU / identity / softmax activations, their
//! forward trace and backpropagation.
//!
//! Weights are stored `(input_dim, output_dim)` so a batch `X` with one sample
//! per row maps to `X·W + b`.
//!
//! Gradient convention for [`NetStack::backward`]: when the last layer is a
//! softmax, the supplied top gradient is taken with respect to its logits
//! (the fused softmax cross-entropy form); otherwise it is taken with respect
//! to the layer output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, shape, Error, Result};
use crate::nn::{loss::softmax_in_place, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: kept units are scaled by `1/(1-p_out)` at train time, so
/// evaluation mode is the identity map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub p_out: f64,
    /// Drop units of the stack's input.
    pub on_input: bool,
    /// Drop units feeding every layer after the first.
    pub on_hidden: bool,
    /// ChaCha stream the masks are drawn from.
    #[serde(default)]
    pub stream: u64,
}

impl DropoutSpec {
    pub fn none() -> Self {
        Self {
            p_out: 0.0,
            on_input: false,
            on_hidden: false,
            stream: 0,
        }
    }

    pub fn new(p_out: f64, on_input: bool, on_hidden: bool) -> Self {
        Self {
            p_out,
            on_input,
            on_hidden,
            stream: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_out) {
            return Err(Error::Config(format!(
                "dropout probability {} outside [0, 1)",
                self.p_out
            )));
        }
        Ok(())
    }

    pub(crate) fn applies_to_layer(&self, layer: usize) -> bool {
        self.p_out > 0.0 && if layer == 0 { self.on_input } else { self.on_hidden }
    }

    /// Per-unit scale factors for a `rows x cols` activation: `0` or `1/(1-p)`.
    /// One realization is drawn per unit and shared by every row of the batch.
    pub fn draw_mask<R: Rng + ?Sized>(&self, rows: usize, cols: usize, rng: &mut R) -> Matrix {
        let keep = 1.0 - self.p_out;
        let scale = 1.0 / keep;
        let unit: Vec<f64> = (0..cols)
            .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
            .collect();
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            m.row_mut(r).copy_from_slice(&unit);
        }
        m
    }
}

pub(crate) fn apply_mask(x: &Matrix, mask: &Matrix) -> Matrix {
    let mut out = x.clone();
    for (v, m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *v *= m;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients for every layer of one stack, in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grads {
    pub layers: Vec<LayerGrad>,
}

impl Grads {
    pub fn zeros_like(net: &NetStack) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.flat_iter().all(|v| v == 0.0)
    }

    pub fn flat_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias).copied())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.flat_iter().collect()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Grads) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(shape("gradient sets of different depth"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.axpy(alpha, &b.weight)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += alpha * y;
            }
        }
        Ok(())
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input of each layer, after dropout.
    pub inputs: Vec<Matrix>,
    /// Dropout scale factors applied to each layer's input, if any.
    pub masks: Vec<Option<Matrix>>,
    /// Affine outputs before the activation.
    pub pre_activations: Vec<Matrix>,
    /// Outputs of each layer.
    pub outputs: Vec<Matrix>,
    pub(crate) net_version: u64,
    pub mode: Mode,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("trace of an empty stack")
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |m| m.rows())
    }

    /// Sign pattern of every ReLU pre-activation. Finite-difference checks use
    /// it to detect when a perturbation crossed a kink.
    pub fn relu_pattern(&self, specs: &[LayerSpec]) -> Vec<bool> {
        let mut out = Vec::new();
        for (pre, spec) in self.pre_activations.iter().zip(specs) {
            if spec.activation == Activation::Relu {
                out.extend(pre.as_slice().iter().map(|&v| v > 0.0));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetStack {
    layers: Vec<Layer>,
    /// Bumped on every parameter update; traces remember the version they saw.
    #[serde(skip)]
    version: u64,
}

/// Parameter equality; the update counter is ignored.
impl PartialEq for NetStack {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("a stack needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_dim == 0 || s.output_dim == 0 {
            return Err(Error::Config(format!("layer {i} has a zero dimension")));
        }
        if s.activation == Activation::Softmax && i + 1 != specs.len() {
            return Err(Error::Config(format!(
                "softmax is only allowed on the last layer (found at layer {i})"
            )));
        }
        if let Some(next) = specs.get(i + 1) {
            if next.input_dim != s.output_dim {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} units but layer {} expects {}",
                    s.output_dim,
                    i + 1,
                    next.input_dim
                )));
            }
        }
    }
    Ok(())
}

impl NetStack {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        validate_specs(specs)?;
        let layers = specs
            .iter()
            .map(|&spec| {
                let limit = (6.0 / (spec.input_dim + spec.output_dim) as f64).sqrt();
                let mut weight = Matrix::zeros(spec.input_dim, spec.output_dim);
                for w in weight.as_mut_slice() {
                    *w = rng.random_range(-limit..=limit);
                }
                Layer {
                    spec,
                    weight,
                    bias: vec![0.0; spec.output_dim],
                }
            })
            .collect();
        Ok(Self { layers, version: 0 })
    }

    /// `input → hidden[0] → … → output`, ReLU on hidden layers.
    pub fn mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        last: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let specs: Vec<LayerSpec> = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == dims.len() { last } else { Activation::Relu };
                LayerSpec::new(w[0], w[1], act)
            })
            .collect();
        Self::new(&specs, rng)
    }

    /// Builds a stack from explicit parameters.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        validate_specs(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            if l.weight.shape() != (l.spec.input_dim, l.spec.output_dim) || l.bias.len() != l.spec.output_dim {
                return Err(shape(format!("layer {i} parameters do not match its spec")));
            }
        }
        Ok(Self { layers, version: 0 })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.output_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn touch(&mut self) {
        self.version = self.version.wrapping_add(1);
    }

    /// Flat parameter view in the order used by [`Grads::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }

    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            let nw = l.weight.as_slice().len();
            if idx < nw {
                return (li, true, idx);
            }
            idx -= nw;
            if idx < l.bias.len() {
                return (li, false, idx);
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn param(&self, idx: usize) -> f64 {
        let (li, w, k) = self.locate(idx);
        if w {
            self.layers[li].weight.as_slice()[k]
        } else {
            self.layers[li].bias[k]
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let (li, w, k) = self.locate(idx);
        if w {
            self.layers[li].weight.as_mut_slice()[k] = value;
        } else {
            self.layers[li].bias[k] = value;
        }
        self.touch();
    }

    /// Human-readable name of a flat parameter index, e.g. `layer1.weight[12]`.
    pub fn param_name(&self, idx: usize) -> String {
        let (li, w, k) = self.locate(idx);
        format!("layer{li}.{}[{k}]", if w { "weight" } else { "bias" })
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Matrix,
        dropout: &DropoutSpec,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Trace> {
        if x.cols() != self.input_dim() {
            return Err(shape(format!(
                "batch has {} features, stack expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        if !x.is_finite() {
            return Err(input("batch contains non-finite values"));
        }
        let n = self.layers.len();
        let mut trace = Trace {
            inputs: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
            pre_activations: Vec::with_capacity(n),
            outputs: Vec::with_capacity(n),
            net_version: self.version,
            mode,
        };
        let mut current = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (layer_in, mask) = if mode == Mode::Train && dropout.applies_to_layer(i) {
                let mask = dropout.draw_mask(current.rows(), current.cols(), rng);
                (apply_mask(&current, &mask), Some(mask))
            } else {
                (current, None)
            };
            let mut pre = layer_in.matmul(&layer.weight)?;
            pre.add_row_vector(&layer.bias)?;
            let out = match layer.spec.activation {
                Activation::Identity => pre.clone(),
                Activation::Relu => pre.map(|v| v.max(0.0)),
                Activation::Softmax => {
                    let mut o = pre.clone();
                    for r in 0..o.rows() {
                        softmax_in_place(o.row_mut(r));
                    }
                    o
                }
            };
            if !out.is_finite() {
                return Err(Error::Numeric(format!("layer {i} produced non-finite activations")));
            }
            trace.inputs.push(layer_in);
            trace.masks.push(mask);
            trace.pre_activations.push(pre);
            current = out.clone();
            trace.outputs.push(out);
        }
        Ok(trace)
    }

    /// Deterministic evaluation-mode output.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        // eval mode never draws from the generator
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut t = self.forward(x, &DropoutSpec::none(), Mode::Eval, &mut rng)?;
        Ok(t.outputs.pop().expect("non-empty stack"))
    }

    pub fn backward(&self, trace: &Trace, top_grad: &Matrix) -> Result<(Grads, Matrix)> {
        let (g, dx) = self.backward_with(trace, top_grad, true)?;
        Ok((g.expect("requested"), dx))
    }

    /// Backpropagation; parameter gradients are only formed when `params` is set.
    /// The returned input gradient is with respect to the stack input before
    /// any input dropout.
    pub fn backward_with(&self, trace: &Trace, top_grad: &Matrix, params: bool) -> Result<(Option<Grads>, Matrix)> {
        if trace.net_version != self.version || trace.inputs.len() != self.layers.len() {
            return Err(Error::State(
                "trace was produced by a different or since-updated stack".into(),
            ));
        }
        let out_shape = trace.output().shape();
        if top_grad.shape() != out_shape {
            return Err(shape(format!(
                "top gradient {:?} does not match output {:?}",
                top_grad.shape(),
                out_shape
            )));
        }
        let mut grads = params.then(|| Grads::zeros_like(self));
        let mut delta = top_grad.clone();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if layer.spec.activation == Activation::Relu {
                for (d, &p) in delta.as_mut_slice().iter_mut().zip(trace.pre_activations[i].as_slice()) {
                    if p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            if let Some(g) = grads.as_mut() {
                g.layers[i].weight = trace.inputs[i].t_matmul(&delta)?;
                g.layers[i].bias = delta.column_sums();
            }
            let mut dx = delta.matmul_t(&layer.weight)?;
            if let Some(mask) = &trace.masks[i] {
                for (v, m) in dx.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *v *= m;
                }
            }
            delta = dx;
        }
        Ok((grads, delta))
    }

    /// `θ += alpha · g` without momentum.
    pub fn add_scaled(&mut self, alpha: f64, grads: &Grads) -> Result<()> {
        check_grads(self, grads)?;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weight.axpy(alpha, &g.weight)?;
            for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
                *b += alpha * gb;
            }
        }
        self.touch();
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}

pub(crate) fn check_grads(net: &NetStack, grads: &Grads) -> Result<()> {
    if grads.layers.len() != net.layers.len() {
        return Err(shape("gradient depth does not match the stack"));
    }
    for (i, (l, g)) in net.layers.iter().zip(&grads.layers).enumerate() {
        if l.weight.shape() != g.weight.shape() || l.bias.len() != g.bias.len() {
            return Err(shape(format!("gradient shape mismatch at layer {i}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_batch(r: &mut ChaCha8Rng, n: usize, m: usize) -> Matrix {
        let data = (0..n * m).map(|_| r.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(n, m, data).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut w = Matrix::zeros(3, 3);
        for i in 0..3 {
            w.set(i, i, 1.0);
        }
        let net = NetStack::from_layers(vec![Layer {
            spec: LayerSpec::new(3, 3, Activation::Identity),
            weight: w,
            bias: vec![0.0; 3],
        }])
        .unwrap();
        let x = Matrix::from_rows(&[[1.5, -2.0, 0.25], [0.0, 3.0, -1.0]]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn zero_logits_give_uniform_softmax() {
        let net = NetStack::from_layers(vec![Layer {
            spec: LayerSpec::new(2, 7, Activation::Softmax),
            weight: Matrix::zeros(2, 7),
            bias: vec![0.0; 7],
        }])
        .unwrap();
        let out = net.predict(&Matrix::filled(4, 2, 0.3)).unwrap();
        for r in out.row_iter() {
            for &p in r {
                assert!((p - 1.0 / 7.0).abs() < 1e-15);
            }
        }
    }

    /// Straight-line evaluation of `softmax(relu(x W1 + b1) W2 + b2)`.
    fn reference_two_layer(net: &NetStack, x: &[f64]) -> Vec<f64> {
        let l1 = &net.layers()[0];
        let l2 = &net.layers()[1];
        let h: Vec<f64> = (0..l1.spec.output_dim)
            .map(|j| {
                let mut s = l1.bias[j];
                for (k, xk) in x.iter().enumerate() {
                    s += xk * l1.weight.get(k, j);
                }
                if s > 0.0 {
                    s
                } else {
                    0.0
                }
            })
            .collect();
        let z: Vec<f64> = (0..l2.spec.output_dim)
            .map(|j| {
                let mut s = l2.bias[j];
                for (k, hk) in h.iter().enumerate() {
                    s += hk * l2.weight.get(k, j);
                }
                s
            })
            .collect();
        let mx = z.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    #[test]
    fn forward_matches_reference_evaluation() {
        let mut r = rng(11);
        let mut net = NetStack::mlp(5, &[8], 4, Activation::Softmax, &mut r).unwrap();
        // non-zero biases so they are exercised
        for l in net.layers_mut() {
            for b in &mut l.bias {
                *b = r.random_range(-0.5..0.5);
            }
        }
        let x = random_batch(&mut r, 6, 5);
        let out = net.predict(&x).unwrap();
        for i in 0..6 {
            let expect = reference_two_layer(&net, x.row(i));
            for (a, b) in out.row(i).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-14);
            }
            assert!((out.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        let mut r = rng(1);
        let net = NetStack::mlp(3, &[4], 2, Activation::Softmax, &mut r).unwrap();
        assert!(matches!(net.predict(&Matrix::zeros(2, 4)), Err(Error::Shape(_))));
        let mut x = Matrix::zeros(1, 3);
        x.set(0, 1, f64::NAN);
        assert!(matches!(net.predict(&x), Err(Error::Input(_))));
    }

    #[test]
    fn softmax_must_be_last() {
        let specs = [
            LayerSpec::new(3, 4, Activation::Softmax),
            LayerSpec::new(4, 2, Activation::Identity),
        ];
        assert!(NetStack::new(&specs, &mut rng(0)).is_err());
        let broken = [
            LayerSpec::new(3, 4, Activation::Relu),
            LayerSpec::new(5, 2, Activation::Softmax),
        ];
        assert!(NetStack::new(&broken, &mut rng(0)).is_err());
    }

    #[test]
    fn eval_mode_ignores_dropout() {
        let mut r = rng(3);
        let net = NetStack::mlp(6, &[10, 10], 3, Activation::Softmax, &mut r).unwrap();
        let x = random_batch(&mut r, 5, 6);
        let d = DropoutSpec::new(0.5, true, true);
        let a = net.forward(&x, &d, Mode::Eval, &mut r).unwrap();
        assert_eq!(a.output(), &net.predict(&x).unwrap());
        assert!(a.masks.iter().all(Option::is_none));
        let t = net.forward(&x, &d, Mode::Train, &mut r).unwrap();
        assert!(t.masks.iter().all(Option::is_some));
    }

    #[test]
    fn dropout_mask_is_inverted_and_shared_across_rows() {
        let d = DropoutSpec::new(0.25, true, false);
        let m = d.draw_mask(3, 4000, &mut rng(9));
        assert!(m.as_slice().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
        assert!(m.row(1) == m.row(0) && m.row(2) == m.row(0));
        let kept = m.row(0).iter().filter(|&&v| v != 0.0).count() as f64;
        let frac = kept / 4000.0;
        // 3σ of a Binomial(4000, 0.75) fraction is about 0.021
        assert!((frac - 0.75).abs() < 0.021, "kept fraction {frac}");
    }

    #[test]
    fn zero_top_gradient_gives_zero_parameter_gradient() {
        let mut r = rng(5);
        let net = NetStack::mlp(4, &[6], 3, Activation::Softmax, &mut r).unwrap();
        let x = random_batch(&mut r, 7, 4);
        let t = net.forward(&x, &DropoutSpec::none(), Mode::Train, &mut r).unwrap();
        let (g, dx) = net.backward(&t, &Matrix::zeros(7, 3)).unwrap();
        assert!(g.is_zero());
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_least_squares_gradient_is_closed_form() {
        // L = 1/(2n) Σ ||x W + b − y||², so dL/dW = Xᵀ(ŷ − y)/n.
        let mut r = rng(21);
        let net = NetStack::mlp(3, &[], 2, Activation::Identity, &mut r).unwrap();
        let n = 9;
        let x = random_batch(&mut r, n, 3);
        let y = random_batch(&mut r, n, 2);
        let t = net.forward(&x, &DropoutSpec::none(), Mode::Train, &mut r).unwrap();
        let mut resid = t.output().clone();
        resid.axpy(-1.0, &y).unwrap();
        let mut top = resid.clone();
        top.scale(1.0 / n as f64);
        let (g, _) = net.backward(&t, &top).unwrap();
        for k in 0..3 {
            for j in 0..2 {
                let mut expect = 0.0;
                for i in 0..n {
                    expect += x.get(i, k) * resid.get(i, j);
                }
                expect /= n as f64;
                assert!((g.layers[0].weight.get(k, j) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn stale_trace_is_rejected() {
        let mut r = rng(8);
        let mut net = NetStack::mlp(2, &[3], 2, Activation::Softmax, &mut r).unwrap();
        let x = random_batch(&mut r, 2, 2);
        let t = net.forward(&x, &DropoutSpec::none(), Mode::Train, &mut r).unwrap();
        let g = Grads::zeros_like(&net);
        net.add_scaled(-0.1, &g).unwrap();
        assert!(matches!(net.backward(&t, &Matrix::zeros(2, 2)), Err(Error::State(_))));
    }

    #[test]
    fn flat_indexing_roundtrips() {
        let mut r = rng(2);
        let mut net = NetStack::mlp(3, &[2], 2, Activation::Softmax, &mut r).unwrap();
        let flat = net.to_flat();
        assert_eq!(flat.len(), net.param_count());
        for (i, &v) in flat.iter().enumerate() {
            assert_eq!(net.param(i), v);
        }
        net.set_param(7, 42.0);
        assert_eq!(net.to_flat()[7], 42.0);
        assert_eq!(net.param_name(6), "layer0.bias[0]");
    }
}
