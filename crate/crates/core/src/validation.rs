//! Seeded validation suites: gradient checks on random networks and
//! brute-force checks of the misclassification bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::eval::task_report;
use crate::infotheory::{
    binary_entropy, blahut_arimoto, g, g_inverse, lower_bound_check, misclassification_upper_bound, BetaGrid,
    DiscreteModel, LowerBoundCheck,
};
use crate::nn::{grad_check, grad_check_range, DropoutSpec, GradCheckReport, Matrix, Mode, Probe};
use crate::objectives::{
    batch_losses, encoder_gradient, loss_gradients, EmpiricalDistribution, Freeze, LossKind, Targets, TriGrads,
};
use crate::trainer::{Architecture, TriNet, TriTrace};

/// Relative tolerance for analytic against central-difference gradients.
pub const GRAD_TOLERANCE: f64 = 1e-6;

/// Checked objectives, in report order.
pub const GRADIENT_LOSSES: [&str; 4] = ["l_r", "l_p", "l_p_obj", "encoder_objective"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCase {
    pub seed: u64,
    pub params: usize,
    pub lambda: f64,
    /// One report per entry of [`GRADIENT_LOSSES`].
    pub reports: Vec<GradCheckReport>,
}

impl GradientCase {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(GradCheckReport::passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }
}

struct Problem {
    net: TriNet,
    x: Matrix,
    y: Vec<usize>,
    z: Vec<usize>,
    p_hat: EmpiricalDistribution,
    lambda: f64,
}

const MASK_SEED: u64 = 0x5eed;

fn random_problem(seed: u64) -> Result<Problem> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let width = |r: &mut ChaCha8Rng| r.random_range(2..=14);
    let arch = Architecture {
        encoder: (0..r.random_range(1..=3)).map(|_| width(&mut r)).collect(),
        regular: (0..r.random_range(0..=2)).map(|_| width(&mut r)).collect(),
        private: (0..r.random_range(0..=2)).map(|_| width(&mut r)).collect(),
    };
    let dim = r.random_range(2..=8);
    let (k_y, k_z) = (r.random_range(2..=6), r.random_range(2..=6));
    let net = TriNet::new(dim, &arch, k_y, k_z, &mut r)?;
    let n = r.random_range(4..=10);
    let x = Matrix::from_vec(n, dim, (0..n * dim).map(|_| r.random_range(-1.5..1.5)).collect())?;
    let y = (0..n).map(|_| r.random_range(0..k_y)).collect();
    let z: Vec<usize> = (0..n).map(|_| r.random_range(0..k_z)).collect();
    let mut w: Vec<f64> = (0..k_z).map(|_| r.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    let p_hat = EmpiricalDistribution::from_probs(w)?;
    let lambda = r.random_range(0.1..2.0);
    Ok(Problem {
        net,
        x,
        y,
        z,
        p_hat,
        lambda,
    })
}

fn dropout() -> DropoutSpec {
    DropoutSpec::new(0.1, true, true)
}

fn traced(net: &TriNet, x: &Matrix) -> Result<TriTrace> {
    let mut mask_rng = ChaCha8Rng::seed_from_u64(MASK_SEED);
    net.forward(x, &dropout(), Mode::Train, &mut mask_rng)
}

/// ReLU signs of every stack plus the sign of the private-loss gap.
fn signature(net: &TriNet, t: &TriTrace, gap: f64) -> Vec<bool> {
    let mut s = t.encoder.relu_pattern(&net.encoder.specs());
    s.extend(t.regular.relu_pattern(&net.regular.specs()));
    s.extend(t.private.relu_pattern(&net.private.specs()));
    s.push(gap > 0.0);
    s
}

/// Gradient check of all four objectives on one seeded random network with a
/// fixed dropout mask.
pub fn gradient_case(seed: u64) -> Result<GradientCase> {
    let Problem {
        mut net,
        x,
        y,
        z,
        p_hat,
        lambda,
    } = random_problem(seed)?;
    let targets = Targets {
        y: &y,
        z: &z,
        p_hat_z: &p_hat,
    };
    let trace = traced(&net, &x)?;
    let base = batch_losses(&trace, &targets, lambda)?;
    // all analytic gradients first: finite differencing invalidates the trace
    let kinds = [LossKind::Regular, LossKind::Private, LossKind::PrivateObjective];
    let mut analytic = Vec::with_capacity(GRADIENT_LOSSES.len());
    for kind in kinds {
        analytic.push(loss_gradients(&net, &trace, &targets, kind, Freeze::NONE)?.to_flat());
    }
    let mut enc = TriGrads::zeros_like(&net);
    enc.encoder = encoder_gradient(&net, &trace, &targets, lambda, base.sign())?;
    analytic.push(enc.to_flat());
    let mut reports = Vec::with_capacity(GRADIENT_LOSSES.len());
    for (i, grad) in analytic.iter().enumerate() {
        let probe = |m: &TriNet| {
            let t = traced(m, &x)?;
            let b = batch_losses(&t, &targets, lambda)?;
            Ok(Probe {
                loss: [b.l_r, b.l_p, b.l_p_obj, b.encoder_objective][i],
                signature: signature(m, &t, b.gap()),
            })
        };
        let report = if i < kinds.len() {
            grad_check(&mut net, grad, probe, GRAD_TOLERANCE)?
        } else {
            // branches are not trained by the encoder objective
            let n_enc = net.encoder.param_count();
            grad_check_range(&mut net, grad, 0..n_enc, probe, GRAD_TOLERANCE)?
        };
        reports.push(report);
    }
    Ok(GradientCase {
        seed,
        params: net.param_count(),
        lambda,
        reports,
    })
}

/// [`gradient_case`] for seeds `seed, seed + 1, …`.
pub fn gradient_suite(nets: usize, seed: u64) -> Result<Vec<GradientCase>> {
    (0..nets as u64).map(|i| gradient_case(seed + i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCase {
    pub seed: u64,
    pub n_z: usize,
    pub n_u: usize,
    pub check: LowerBoundCheck,
}

/// Lower-bound checks on `models` random discrete models, model `i` drawn from seed `seed + i`.
pub fn lower_bound_suite(
    models: usize,
    seed: u64,
    max_alphabet: usize,
    grid: &BetaGrid,
) -> Result<Vec<LowerBoundCase>> {
    (0..models as u64)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed + i);
            let m = DiscreteModel::random(&mut r, max_alphabet);
            let check = lower_bound_check(&m, grid).map_err(|e| input(format!("model seed {}: {e}", seed + i)))?;
            Ok(LowerBoundCase {
                seed: seed + i,
                n_z: m.n_z(),
                n_u: m.n_u(),
                check,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HammingCheck {
    pub distortion: f64,
    pub rate: f64,
    /// `log 2 − H(D)`.
    pub analytic: f64,
    pub beta: f64,
}

impl HammingCheck {
    pub fn error(&self) -> f64 {
        (self.rate - self.analytic).abs()
    }
}

/// Blahut–Arimoto rate of a uniform binary source under Hamming distortion,
/// sampled at distortion `target` by bisection on `log β`.
pub fn hamming_check(target: f64) -> Result<HammingCheck> {
    if !(target > 0.0 && target < 0.5) {
        return Err(input(format!("target distortion must lie in (0, 1/2), got {target}")));
    }
    let p = [0.5, 0.5];
    let d = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])?;
    let (mut a, mut b) = (1e-3f64.ln(), 1e3f64.ln());
    let mut point = blahut_arimoto(&p, &d, b.exp())?;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        point = blahut_arimoto(&p, &d, mid.exp())?;
        if (point.distortion - target).abs() < 1e-13 {
            break;
        }
        // distortion falls as β grows
        if point.distortion > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(HammingCheck {
        distortion: point.distortion,
        rate: point.rate,
        analytic: 2f64.ln() - binary_entropy(target),
        beta: point.beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GCheck {
    pub n_classes: usize,
    /// `|g(0)|`.
    pub at_zero: f64,
    /// `|g(1 − 1/k) − log k|`.
    pub at_ceiling: f64,
    pub max_roundtrip_error: f64,
    pub negative_input: f64,
}

/// Endpoint values and `g⁻¹(g(t))` roundtrips on `points` evenly spaced `t`
/// in `[0, 1 − 1/k]`.
pub fn g_check(n_classes: usize, points: usize) -> Result<GCheck> {
    if points < 2 {
        return Err(input("need at least two grid points"));
    }
    let k = n_classes as f64;
    let ceiling = 1.0 - 1.0 / k;
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let t = ceiling * i as f64 / (points - 1) as f64;
        worst = worst.max((g_inverse(g(t, n_classes)?, n_classes)? - t).abs());
    }
    Ok(GCheck {
        n_classes,
        at_zero: g(0.0, n_classes)?.abs(),
        at_ceiling: (g(ceiling, n_classes)? - k.ln()).abs(),
        max_roundtrip_error: worst,
        negative_input: g_inverse(-1.0, n_classes)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundCase {
    pub seed: u64,
    pub misclassification: f64,
    pub argmax_error: f64,
    pub cross_entropy: f64,
    pub bound: f64,
}

impl UpperBoundCase {
    pub fn slack(&self) -> f64 {
        self.bound - self.misclassification
    }
}

/// Soft misclassification `1 − mean Q̂(label|x)` against `1 − exp(−L)` on a
/// random prediction matrix and label vector per seed. Rows mix peaked and
/// flat predictions so both ends of the bound are exercised.
pub fn upper_bound_suite(sets: usize, seed: u64) -> Result<Vec<UpperBoundCase>> {
    (0..sets as u64)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed + i);
            let n = r.random_range(1..=60);
            let k = r.random_range(2..=30);
            let sharp = r.random_range(0.0..8.0);
            let mut rows = Vec::with_capacity(n * k);
            for _ in 0..n {
                let logits: Vec<f64> = (0..k).map(|_| sharp * r.random::<f64>()).collect();
                rows.extend(crate::nn::softmax(&logits));
            }
            let preds = Matrix::from_vec(n, k, rows)?;
            let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
            let t = task_report(&preds, &labels, None)?;
            Ok(UpperBoundCase {
                seed: seed + i,
                misclassification: t.soft_error,
                argmax_error: 1.0 - t.accuracy,
                cross_entropy: t.cross_entropy,
                bound: misclassification_upper_bound(t.cross_entropy)?,
            })
        })
        .collect()
}
