//! Central finite-difference gradient oracle.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::NetStack;

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-5;

/// Scale below which errors are measured absolutely: the relative error is
/// `|analytic − numeric| / max(|analytic|, |numeric|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-4;

/// Anything with an indexable flat parameter vector.
pub trait ParamVector {
    fn n_params(&self) -> usize;
    fn param_at(&self, idx: usize) -> f64;
    fn set_param_at(&mut self, idx: usize, value: f64);
    fn param_label(&self, idx: usize) -> String;
}

impl ParamVector for NetStack {
    fn n_params(&self) -> usize {
        self.param_count()
    }
    fn param_at(&self, idx: usize) -> f64 {
        self.param(idx)
    }
    fn set_param_at(&mut self, idx: usize, value: f64) {
        self.set_param(idx, value)
    }
    fn param_label(&self, idx: usize) -> String {
        self.param_name(idx)
    }
}

/// Loss value plus a signature of every non-differentiable branch taken
/// (ReLU signs, the sign inside an absolute value). Coordinates whose
/// perturbation changes the signature straddle a kink and are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub loss: f64,
    pub signature: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` (flat, in the model's parameter order) against central
/// differences of `loss`. The model is restored bit-exactly afterwards.
pub fn grad_check<M, F>(model: &mut M, analytic: &[f64], loss: F, tolerance: f64) -> Result<GradCheckReport>
where
    M: ParamVector,
    F: FnMut(&M) -> Result<Probe>,
{
    let n = model.n_params();
    grad_check_range(model, analytic, 0..n, loss, tolerance)
}

/// [`grad_check`] restricted to the coordinates in `coords`.
pub fn grad_check_range<M, F>(
    model: &mut M,
    analytic: &[f64],
    coords: std::ops::Range<usize>,
    mut loss: F,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    M: ParamVector,
    F: FnMut(&M) -> Result<Probe>,
{
    assert_eq!(analytic.len(), model.n_params(), "analytic gradient length");
    assert!(coords.end <= model.n_params(), "coordinate range");
    let base = loss(model)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        skipped_kinks: 0,
        tolerance,
    };
    for idx in coords {
        let orig = model.param_at(idx);
        model.set_param_at(idx, orig + FD_STEP);
        let up = loss(model);
        model.set_param_at(idx, orig - FD_STEP);
        let down = loss(model);
        model.set_param_at(idx, orig);
        let (up, down) = (up?, down?);
        if up.signature != base.signature || down.signature != base.signature {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (up.loss - down.loss) / (2.0 * FD_STEP);
        let err = relative_error(analytic[idx], numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst_param.is_none() {
            report.max_rel_error = err;
            report.worst_param = Some(model.param_label(idx));
            report.worst_analytic = analytic[idx];
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{softmax_cross_entropy, Activation, DropoutSpec, Matrix, Mode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_layer_net_regular_loss() {
        let mut r = ChaCha8Rng::seed_from_u64(17);
        let mut net = NetStack::mlp(6, &[9, 7], 4, Activation::Softmax, &mut r).unwrap();
        let n = 5;
        let x = Matrix::from_vec(n, 6, (0..n * 6).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
        let dropout = DropoutSpec::new(0.2, true, true);

        let eval = |net: &NetStack| -> Result<(f64, Matrix, crate::nn::Trace)> {
            // same seed every call: identical dropout masks at each probe
            let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
            let t = net.forward(&x, &dropout, Mode::Train, &mut mask_rng)?;
            let mut top = Matrix::zeros(n, 4);
            let mut total = 0.0;
            for i in 0..n {
                let logits = t.pre_activations.last().unwrap().row(i);
                let mut target = vec![0.0; 4];
                target[labels[i]] = 1.0;
                let (l, g) = softmax_cross_entropy(logits, &target)?;
                total += l;
                for (o, gv) in top.row_mut(i).iter_mut().zip(g) {
                    *o = gv / n as f64;
                }
            }
            Ok((total / n as f64, top, t))
        };
        let (_, top, trace) = eval(&net).unwrap();
        let (g, _) = net.backward(&trace, &top).unwrap();
        let specs = net.specs();
        let report = grad_check(
            &mut net,
            &g.to_flat(),
            |m| {
                let (loss, _, t) = eval(m)?;
                Ok(Probe {
                    loss,
                    signature: t.relu_pattern(&specs),
                })
            },
            1e-6,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.checked > report.skipped_kinks);
    }

    #[test]
    fn model_is_restored() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let mut net = NetStack::mlp(3, &[], 2, Activation::Identity, &mut r).unwrap();
        let before = net.to_flat();
        let analytic = vec![0.0; net.param_count()];
        grad_check(
            &mut net,
            &analytic,
            |m| {
                Ok(Probe {
                    loss: m.to_flat().iter().map(|v| v * v).sum::<f64>(),
                    signature: vec![],
                })
            },
            1e-6,
        )
        .unwrap();
        assert_eq!(before, net.to_flat());
    }
}
