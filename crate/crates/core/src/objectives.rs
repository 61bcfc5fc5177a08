//! Training losses and the adversarial encoder objective.
//!
//! * `L_r`: mean cross-entropy of the regular branch against one-hot `y`.
//! * `L_p`: mean cross-entropy of the private branch against one-hot `z`.
//! * `L_p_obj`: mean cross-entropy of the private branch against the empirical
//!   private-label distribution `P̂_Z`, i.e. the loss a random-guessing
//!   predictor would be pulled towards.
//! * encoder objective: `L_r + λ·|L_p_obj − L_p|`.
//!
//! Branches are always trained on their own plain cross-entropies; only the
//! encoder sees the absolute-value term. The objective is written with a plus
//! sign: the gap term vanishes once the private branch matches random guessing.
//! At the kink (`L_p_obj == L_p`) the subgradient 0 is used.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, input, shape, Result};
use crate::nn::{log_sum_exp, Grads, Matrix};
use crate::trainer::{TriNet, TriTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub probs: Vec<f64>,
    pub count: usize,
}

impl EmpiricalDistribution {
    /// Class frequencies of `labels` over `0..n_classes`.
    pub fn from_labels(labels: &[usize], n_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(input("cannot estimate a distribution from zero samples"));
        }
        let mut counts = vec![0usize; n_classes];
        for &l in labels {
            *counts
                .get_mut(l)
                .ok_or_else(|| input(format!("label {l} outside 0..{n_classes}")))? += 1;
        }
        let n = labels.len() as f64;
        Ok(Self {
            probs: counts.iter().map(|&c| c as f64 / n).collect(),
            count: labels.len(),
        })
    }

    /// Wraps an explicit probability vector.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(input(format!("not a probability vector (sum {sum})")));
        }
        Ok(Self { probs, count: 0 })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
            count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        crate::infotheory::entropy_unchecked(&self.probs)
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Regular,
    Private,
}

pub fn empirical_label_distribution(dataset: &Dataset, which: LabelKind) -> Result<EmpiricalDistribution> {
    match which {
        LabelKind::Regular => EmpiricalDistribution::from_labels(&dataset.y, dataset.n_regular),
        LabelKind::Private => EmpiricalDistribution::from_labels(&dataset.z, dataset.n_private),
    }
}

/// `−log p`, with `p` floored at the smallest normal so the result stays finite.
fn neg_log(p: f64) -> f64 {
    -p.max(f64::MIN_POSITIVE).ln()
}

fn check_labels(predictions: &Matrix, labels: &[usize]) -> Result<()> {
    if predictions.rows() != labels.len() {
        return Err(shape(format!(
            "{} prediction rows for {} labels",
            predictions.rows(),
            labels.len()
        )));
    }
    if predictions.rows() == 0 {
        return Err(input("empty prediction matrix"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= predictions.cols()) {
        return Err(input(format!(
            "label {bad} outside alphabet of size {}",
            predictions.cols()
        )));
    }
    Ok(())
}

/// Mean one-hot cross-entropy of probability rows against `labels`.
pub fn cross_entropy(predictions: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(predictions, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| neg_log(predictions.get(i, l)))
        .sum();
    Ok(total / labels.len() as f64)
}

/// `L_r` over regular-label predictions.
pub fn regular_loss(predictions: &Matrix, y: &[usize]) -> Result<f64> {
    cross_entropy(predictions, y)
}

/// `L_p` over private-label predictions.
pub fn private_loss(predictions: &Matrix, z: &[usize]) -> Result<f64> {
    cross_entropy(predictions, z)
}

/// `L_p_obj`: mean of `⟨P̂_Z, −log row⟩`.
pub fn private_objective_loss(predictions: &Matrix, p_hat_z: &EmpiricalDistribution) -> Result<f64> {
    if predictions.cols() != p_hat_z.len() {
        return Err(shape(format!(
            "predictions over {} classes against P̂_Z over {}",
            predictions.cols(),
            p_hat_z.len()
        )));
    }
    if predictions.rows() == 0 {
        return Err(input("empty prediction matrix"));
    }
    let total: f64 = predictions
        .row_iter()
        .map(|r| {
            r.iter()
                .zip(&p_hat_z.probs)
                .filter(|(_, &w)| w != 0.0)
                .map(|(&p, &w)| w * neg_log(p))
                .sum::<f64>()
        })
        .sum();
    Ok(total / predictions.rows() as f64)
}

/// Sign of `L_p_obj − L_p`; exactly zero at the kink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapSign {
    Negative,
    Zero,
    Positive,
}

impl GapSign {
    pub fn of(gap: f64) -> Self {
        if gap > 0.0 {
            GapSign::Positive
        } else if gap < 0.0 {
            GapSign::Negative
        } else {
            GapSign::Zero
        }
    }

    pub fn value(self) -> f64 {
        match self {
            GapSign::Negative => -1.0,
            GapSign::Zero => 0.0,
            GapSign::Positive => 1.0,
        }
    }
}

/// `L_r + λ·|L_p_obj − L_p|` and the sign of the gap.
pub fn encoder_objective(l_r: f64, l_p: f64, l_p_obj: f64, lambda: f64) -> Result<(f64, GapSign)> {
    if !(lambda >= 0.0) {
        return Err(config(format!("λ must be ≥ 0, got {lambda}")));
    }
    let gap = l_p_obj - l_p;
    Ok((l_r + lambda * gap.abs(), GapSign::of(gap)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub l_r: f64,
    pub l_p: f64,
    pub l_p_obj: f64,
    pub lambda: f64,
    pub encoder_objective: f64,
}

impl LossBundle {
    pub fn new(l_r: f64, l_p: f64, l_p_obj: f64, lambda: f64) -> Result<Self> {
        let (encoder_objective, _) = encoder_objective(l_r, l_p, l_p_obj, lambda)?;
        Ok(Self {
            l_r,
            l_p,
            l_p_obj,
            lambda,
            encoder_objective,
        })
    }

    pub fn gap(&self) -> f64 {
        self.l_p_obj - self.l_p
    }

    pub fn sign(&self) -> GapSign {
        GapSign::of(self.gap())
    }

    pub fn is_finite(&self) -> bool {
        self.l_r.is_finite() && self.l_p.is_finite() && self.l_p_obj.is_finite()
    }
}

/// Labels and `P̂_Z` for one batch.
#[derive(Debug, Clone, Copy)]
pub struct Targets<'a> {
    pub y: &'a [usize],
    pub z: &'a [usize],
    pub p_hat_z: &'a EmpiricalDistribution,
}

impl Targets<'_> {
    fn check(&self, trace: &TriTrace) -> Result<()> {
        let n = trace.batch_size();
        if self.y.len() != n || self.z.len() != n {
            return Err(shape(format!(
                "batch of {n} with {} regular and {} private labels",
                self.y.len(),
                self.z.len()
            )));
        }
        if self.p_hat_z.len() != trace.private_probs().cols() {
            return Err(shape("P̂_Z size does not match the private branch"));
        }
        if self.y.iter().any(|&l| l >= trace.regular_probs().cols())
            || self.z.iter().any(|&l| l >= trace.private_probs().cols())
        {
            return Err(input("label outside its alphabet"));
        }
        Ok(())
    }
}

/// All three losses of a traced batch, computed from the branch logits with
/// log-sum-exp so they stay finite for saturated softmaxes.
pub fn batch_losses(trace: &TriTrace, targets: &Targets<'_>, lambda: f64) -> Result<LossBundle> {
    targets.check(trace)?;
    let n = trace.batch_size() as f64;
    let (rl, pl) = (trace.regular_logits(), trace.private_logits());
    let mut l_r = 0.0;
    let mut l_p = 0.0;
    let mut l_obj = 0.0;
    for i in 0..trace.batch_size() {
        let r = rl.row(i);
        l_r += log_sum_exp(r) - r[targets.y[i]];
        let p = pl.row(i);
        let lse = log_sum_exp(p);
        l_p += lse - p[targets.z[i]];
        l_obj += p
            .iter()
            .zip(&targets.p_hat_z.probs)
            .filter(|(_, &w)| w != 0.0)
            .map(|(&v, &w)| w * (lse - v))
            .sum::<f64>();
    }
    LossBundle::new(l_r / n, l_p / n, l_obj / n, lambda)
}

/// `(softmax − onehot(labels)) / n`
fn one_hot_top(probs: &Matrix, labels: &[usize]) -> Matrix {
    let n = probs.rows() as f64;
    let mut top = probs.clone();
    for (i, &l) in labels.iter().enumerate() {
        let v = top.get(i, l);
        top.set(i, l, v - 1.0);
    }
    top.scale(1.0 / n);
    top
}

/// `(softmax − P̂_Z) / n` on every row.
fn soft_top(probs: &Matrix, target: &[f64]) -> Matrix {
    let n = probs.rows() as f64;
    let mut top = probs.clone();
    for i in 0..top.rows() {
        for (v, t) in top.row_mut(i).iter_mut().zip(target) {
            *v = (*v - t) / n;
        }
    }
    top
}

/// Logit gradient of `L_p_obj − L_p`, which is `(onehot(z) − P̂_Z) / n`.
fn gap_top(n_rows: usize, n_cols: usize, z: &[usize], p_hat: &[f64]) -> Matrix {
    let n = n_rows as f64;
    let mut top = Matrix::zeros(n_rows, n_cols);
    for i in 0..n_rows {
        for (j, v) in top.row_mut(i).iter_mut().enumerate() {
            let e = if j == z[i] { 1.0 } else { 0.0 };
            *v = (e - p_hat[j]) / n;
        }
    }
    top
}

/// Which parameter groups receive no gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Freeze {
    pub encoder: bool,
    pub regular: bool,
    pub private: bool,
}

impl Freeze {
    pub const NONE: Freeze = Freeze {
        encoder: false,
        regular: false,
        private: false,
    };
    pub const ENCODER: Freeze = Freeze {
        encoder: true,
        regular: false,
        private: false,
    };
    pub const BRANCHES: Freeze = Freeze {
        encoder: false,
        regular: true,
        private: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriGrads {
    pub encoder: Grads,
    pub regular: Grads,
    pub private: Grads,
}

impl TriGrads {
    pub fn zeros_like(net: &TriNet) -> Self {
        Self {
            encoder: Grads::zeros_like(&net.encoder),
            regular: Grads::zeros_like(&net.regular),
            private: Grads::zeros_like(&net.private),
        }
    }

    /// Flat layout matching [`crate::nn::ParamVector`] on [`TriNet`].
    pub fn to_flat(&self) -> Vec<f64> {
        self.encoder
            .flat_iter()
            .chain(self.regular.flat_iter())
            .chain(self.private.flat_iter())
            .collect()
    }
}

/// Backpropagates logit gradients of the two branches through the network.
///
/// `encoder_tops` are the branch logit gradients routed into the encoder; they
/// may differ from the branch's own training signal (the encoder objective).
/// A `None` top contributes nothing.
fn backprop(
    net: &TriNet,
    trace: &TriTrace,
    branch_tops: (Option<&Matrix>, Option<&Matrix>),
    encoder_tops: (Option<&Matrix>, Option<&Matrix>),
    freeze: Freeze,
) -> Result<TriGrads> {
    let mut out = TriGrads::zeros_like(net);
    if !freeze.regular {
        if let Some(top) = branch_tops.0 {
            out.regular = net
                .regular
                .backward_with(&trace.regular, top, true)?
                .0
                .expect("requested");
        }
    }
    if !freeze.private {
        if let Some(top) = branch_tops.1 {
            out.private = net
                .private
                .backward_with(&trace.private, top, true)?
                .0
                .expect("requested");
        }
    }
    if freeze.encoder || (encoder_tops.0.is_none() && encoder_tops.1.is_none()) {
        return Ok(out);
    }
    let mut du = Matrix::zeros(trace.batch_size(), net.representation_dim());
    if let Some(top) = encoder_tops.0 {
        du.add_assign(&net.regular.backward_with(&trace.regular, top, false)?.1)?;
    }
    if let Some(top) = encoder_tops.1 {
        du.add_assign(&net.private.backward_with(&trace.private, top, false)?.1)?;
    }
    if let Some(mask) = &trace.u_mask {
        for (v, m) in du.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *v *= m;
        }
    }
    out.encoder = net.encoder.backward(&trace.encoder, &du)?.0;
    Ok(out)
}

/// Which single loss to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Regular,
    Private,
    PrivateObjective,
}

/// Gradient of one loss with respect to every non-frozen parameter.
pub fn loss_gradients(
    net: &TriNet,
    trace: &TriTrace,
    targets: &Targets<'_>,
    kind: LossKind,
    freeze: Freeze,
) -> Result<TriGrads> {
    targets.check(trace)?;
    match kind {
        LossKind::Regular => {
            let top = one_hot_top(trace.regular_probs(), targets.y);
            backprop(net, trace, (Some(&top), None), (Some(&top), None), freeze)
        }
        LossKind::Private => {
            let top = one_hot_top(trace.private_probs(), targets.z);
            backprop(net, trace, (None, Some(&top)), (None, Some(&top)), freeze)
        }
        LossKind::PrivateObjective => {
            let top = soft_top(trace.private_probs(), &targets.p_hat_z.probs);
            backprop(net, trace, (None, Some(&top)), (None, Some(&top)), freeze)
        }
    }
}

/// Branch updates: regular branch on `L_r`, private branch on `L_p`. The
/// encoder gets nothing.
pub fn branch_gradients(net: &TriNet, trace: &TriTrace, targets: &Targets<'_>) -> Result<(Grads, Grads)> {
    targets.check(trace)?;
    let top_r = one_hot_top(trace.regular_probs(), targets.y);
    let top_p = one_hot_top(trace.private_probs(), targets.z);
    let g = backprop(net, trace, (Some(&top_r), Some(&top_p)), (None, None), Freeze::ENCODER)?;
    Ok((g.regular, g.private))
}

/// `∇θ_c L_r + λ·s·(∇θ_c L_p_obj − ∇θ_c L_p)`. Branch parameters are untouched.
/// With `λ = 0` or `s = 0` the private branch is not backpropagated at all, so
/// the result equals the plain regular-loss encoder gradient bit for bit.
pub fn encoder_gradient(
    net: &TriNet,
    trace: &TriTrace,
    targets: &Targets<'_>,
    lambda: f64,
    sign: GapSign,
) -> Result<Grads> {
    if !(lambda >= 0.0) {
        return Err(config(format!("λ must be ≥ 0, got {lambda}")));
    }
    targets.check(trace)?;
    let top_r = one_hot_top(trace.regular_probs(), targets.y);
    let coeff = lambda * sign.value();
    let top_p = (coeff != 0.0).then(|| {
        let (n, k) = trace.private_probs().shape();
        let mut t = gap_top(n, k, targets.z, &targets.p_hat_z.probs);
        t.scale(coeff);
        t
    });
    let g = backprop(
        net,
        trace,
        (None, None),
        (Some(&top_r), top_p.as_ref()),
        Freeze::BRANCHES,
    )?;
    Ok(g.encoder)
}

/// Encoder gradient plus branch gradients from one traced batch, as used by
/// simultaneous training.
pub fn simultaneous_gradients(
    net: &TriNet,
    trace: &TriTrace,
    targets: &Targets<'_>,
    lambda: f64,
    sign: GapSign,
) -> Result<TriGrads> {
    let (regular, private) = branch_gradients(net, trace, targets)?;
    let encoder = encoder_gradient(net, trace, targets, lambda, sign)?;
    Ok(TriGrads {
        encoder,
        regular,
        private,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::nn::{grad_check, grad_check_range, DropoutSpec, Mode, Probe};
    use crate::trainer::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn probs(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn empirical_distribution_counts() {
        let d = EmpiricalDistribution::from_labels(&[0, 0, 1], 2).unwrap();
        assert!((d.probs[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.probs[1] - 1.0 / 3.0).abs() < 1e-15);
        let labels: Vec<usize> = (0..30).flat_map(|z| std::iter::repeat_n(z, 25)).collect();
        let u = EmpiricalDistribution::from_labels(&labels, 30).unwrap();
        assert!(u.probs.iter().all(|&p| (p - 1.0 / 30.0).abs() < 1e-15));
        assert_eq!(u.count, 750);
        assert!(EmpiricalDistribution::from_labels(&[], 3).is_err());
        assert!(EmpiricalDistribution::from_labels(&[3], 3).is_err());
    }

    #[test]
    fn regular_loss_values() {
        let uniform = Matrix::filled(4, 10, 0.1);
        assert!((regular_loss(&uniform, &[0, 3, 9, 2]).unwrap() - 10f64.ln()).abs() < 1e-12);
        let perfect = probs(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(regular_loss(&perfect, &[0, 1]).unwrap(), 0.0);
        let p = probs(&[&[0.7, 0.2, 0.1], &[0.7, 0.2, 0.1], &[0.7, 0.2, 0.1]]);
        let expect = -(0.7f64.ln() + 0.2f64.ln() + 0.1f64.ln()) / 3.0;
        assert!((regular_loss(&p, &[0, 1, 2]).unwrap() - expect).abs() < 1e-15);
        // 1.42290 to five places
        assert!((expect - 1.42290).abs() < 1e-5);
        assert!(matches!(regular_loss(&p, &[0, 1, 3]), Err(Error::Input(_))));
    }

    #[test]
    fn private_loss_values() {
        let uniform = Matrix::filled(5, 30, 1.0 / 30.0);
        let l = private_loss(&uniform, &[0, 5, 29, 7, 7]).unwrap();
        assert!((l - 30f64.ln()).abs() < 1e-12);
        assert!((l - 3.4012).abs() < 1e-4);
        let p = probs(&[&[0.7, 0.2, 0.1], &[0.7, 0.2, 0.1], &[0.7, 0.2, 0.1]]);
        assert_eq!(
            private_loss(&p, &[0, 1, 2]).unwrap(),
            regular_loss(&p, &[0, 1, 2]).unwrap()
        );
    }

    #[test]
    fn objective_loss_values() {
        let ph = EmpiricalDistribution::from_probs(vec![0.5, 0.3, 0.2]).unwrap();
        let rows = probs(&[&[0.5, 0.3, 0.2], &[0.5, 0.3, 0.2]]);
        let l = private_objective_loss(&rows, &ph).unwrap();
        assert!((l - ph.entropy()).abs() < 1e-15);

        let u = EmpiricalDistribution::uniform(10);
        let l = private_objective_loss(&Matrix::filled(3, 10, 0.1), &u).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);

        let half = EmpiricalDistribution::uniform(2);
        let l = private_objective_loss(&probs(&[&[0.9, 0.1]]), &half).unwrap();
        assert!((l - 1.20397).abs() < 1e-5);
        assert!(private_objective_loss(&Matrix::filled(1, 3, 1.0 / 3.0), &half).is_err());
    }

    #[test]
    fn encoder_objective_cases() {
        assert_eq!(encoder_objective(0.7, 2.0, 3.0, 0.0).unwrap().0, 0.7);
        let (v, s) = encoder_objective(0.7, 2.5, 2.5, 4.0).unwrap();
        assert_eq!((v, s), (0.7, GapSign::Zero));
        let (v, s) = encoder_objective(1.0, 2.0, 3.0, 0.5).unwrap();
        assert!((v - 1.5).abs() < 1e-15);
        assert_eq!(s, GapSign::Positive);
        assert_eq!(encoder_objective(1.0, 3.0, 2.0, 0.5).unwrap().0, v);
        assert!(matches!(encoder_objective(1.0, 2.0, 3.0, -0.1), Err(Error::Config(_))));
    }

    struct Fixture {
        net: TriNet,
        x: Matrix,
        y: Vec<usize>,
        z: Vec<usize>,
        p_hat: EmpiricalDistribution,
    }

    fn fixture(seed: u64) -> Fixture {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture {
            encoder: vec![7, 6],
            regular: vec![5],
            private: vec![5],
        };
        let net = TriNet::new(4, &arch, 3, 4, &mut r).unwrap();
        let n = 6;
        let x = Matrix::from_vec(n, 4, (0..n * 4).map(|_| r.random_range(-1.5..1.5)).collect()).unwrap();
        let y = (0..n).map(|_| r.random_range(0..3)).collect();
        let z: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let p_hat = EmpiricalDistribution::from_probs(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        Fixture { net, x, y, z, p_hat }
    }

    fn trace_of(f: &Fixture, net: &TriNet) -> TriTrace {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(123);
        net.forward(&f.x, &DropoutSpec::new(0.1, true, true), Mode::Train, &mut mask_rng)
            .unwrap()
    }

    fn signature(net: &TriNet, t: &TriTrace) -> Vec<bool> {
        let mut s = t.encoder.relu_pattern(&net.encoder.specs());
        s.extend(t.regular.relu_pattern(&net.regular.specs()));
        s.extend(t.private.relu_pattern(&net.private.specs()));
        s
    }

    #[test]
    fn batch_losses_agree_with_probability_forms() {
        let f = fixture(3);
        let t = trace_of(&f, &f.net);
        let tg = Targets {
            y: &f.y,
            z: &f.z,
            p_hat_z: &f.p_hat,
        };
        let b = batch_losses(&t, &tg, 0.3).unwrap();
        assert!((b.l_r - regular_loss(t.regular_probs(), &f.y).unwrap()).abs() < 1e-12);
        assert!((b.l_p - private_loss(t.private_probs(), &f.z).unwrap()).abs() < 1e-12);
        let obj = private_objective_loss(t.private_probs(), &f.p_hat).unwrap();
        assert!((b.l_p_obj - obj).abs() < 1e-12);
        assert!((b.encoder_objective - (b.l_r + 0.3 * (b.l_p_obj - b.l_p).abs())).abs() < 1e-15);
    }

    #[test]
    fn single_loss_gradients_match_finite_differences() {
        for kind in [LossKind::Regular, LossKind::Private, LossKind::PrivateObjective] {
            let mut f = fixture(10);
            let t = trace_of(&f, &f.net);
            let tg = Targets {
                y: &f.y,
                z: &f.z,
                p_hat_z: &f.p_hat,
            };
            let g = loss_gradients(&f.net, &t, &tg, kind, Freeze::NONE).unwrap();
            let (y, z, p_hat, fx) = (f.y.clone(), f.z.clone(), f.p_hat.clone(), f.x.clone());
            let report = grad_check(
                &mut f.net,
                &g.to_flat(),
                |m| {
                    let mut mask_rng = ChaCha8Rng::seed_from_u64(123);
                    let t = m.forward(&fx, &DropoutSpec::new(0.1, true, true), Mode::Train, &mut mask_rng)?;
                    let b = batch_losses(
                        &t,
                        &Targets {
                            y: &y,
                            z: &z,
                            p_hat_z: &p_hat,
                        },
                        0.0,
                    )?;
                    let loss = match kind {
                        LossKind::Regular => b.l_r,
                        LossKind::Private => b.l_p,
                        LossKind::PrivateObjective => b.l_p_obj,
                    };
                    Ok(Probe {
                        loss,
                        signature: signature(m, &t),
                    })
                },
                1e-6,
            )
            .unwrap();
            assert!(report.passed(), "{kind:?}: {report:?}");
        }
    }

    #[test]
    fn frozen_encoder_gets_exactly_zero() {
        let f = fixture(2);
        let t = trace_of(&f, &f.net);
        let tg = Targets {
            y: &f.y,
            z: &f.z,
            p_hat_z: &f.p_hat,
        };
        let g = loss_gradients(&f.net, &t, &tg, LossKind::Private, Freeze::ENCODER).unwrap();
        assert!(g.encoder.is_zero());
        assert!(!g.private.is_zero());
        let (r, p) = branch_gradients(&f.net, &t, &tg).unwrap();
        assert!(!r.is_zero() && !p.is_zero());
    }

    #[test]
    fn encoder_gradient_degenerate_cases() {
        let f = fixture(5);
        let t = trace_of(&f, &f.net);
        let tg = Targets {
            y: &f.y,
            z: &f.z,
            p_hat_z: &f.p_hat,
        };
        let plain = loss_gradients(&f.net, &t, &tg, LossKind::Regular, Freeze::BRANCHES)
            .unwrap()
            .encoder;
        let at_zero_lambda = encoder_gradient(&f.net, &t, &tg, 0.0, GapSign::Positive).unwrap();
        let at_kink = encoder_gradient(&f.net, &t, &tg, 2.0, GapSign::Zero).unwrap();
        assert_eq!(plain.to_flat(), at_zero_lambda.to_flat());
        assert_eq!(plain.to_flat(), at_kink.to_flat());
        let active = encoder_gradient(&f.net, &t, &tg, 2.0, GapSign::Positive).unwrap();
        assert_ne!(plain.to_flat(), active.to_flat());
    }

    #[test]
    fn encoder_gradient_matches_objective_finite_differences() {
        for (seed, lambda) in [(1u64, 0.7), (4, 2.0), (9, 0.25)] {
            let mut f = fixture(seed);
            let t = trace_of(&f, &f.net);
            let tg = Targets {
                y: &f.y,
                z: &f.z,
                p_hat_z: &f.p_hat,
            };
            let b = batch_losses(&t, &tg, lambda).unwrap();
            assert_ne!(b.sign(), GapSign::Zero);
            let ge = encoder_gradient(&f.net, &t, &tg, lambda, b.sign()).unwrap();
            let mut analytic = TriGrads::zeros_like(&f.net);
            analytic.encoder = ge;
            let n_enc = f.net.encoder.param_count();
            let (y, z, p_hat, fx) = (f.y.clone(), f.z.clone(), f.p_hat.clone(), f.x.clone());
            // FD only over encoder coordinates: branches are not trained by this objective
            let report = grad_check_range(
                &mut f.net,
                &analytic.to_flat(),
                0..n_enc,
                |m| {
                    let mut mask_rng = ChaCha8Rng::seed_from_u64(123);
                    let t = m.forward(&fx, &DropoutSpec::new(0.1, true, true), Mode::Train, &mut mask_rng)?;
                    let b = batch_losses(
                        &t,
                        &Targets {
                            y: &y,
                            z: &z,
                            p_hat_z: &p_hat,
                        },
                        lambda,
                    )?;
                    let mut sig = signature(m, &t);
                    sig.push(b.gap() > 0.0);
                    Ok(Probe {
                        loss: b.encoder_objective,
                        signature: sig,
                    })
                },
                1e-6,
            );
            let report = report.unwrap();
            assert!(report.passed(), "λ={lambda}: {report:?}");
            assert!(report.checked > n_enc / 2);
        }
    }
}
