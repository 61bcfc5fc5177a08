//! Exact checks of the error bounds on small discrete models.
//!
//! A model is a prior `P(z)`, a channel `Q(u|z)` and a classifier `Q̂(z|u)`.
//! Any classifier's error is bounded below by the distortion-rate function
//! at `I(Z;U)` under distortion `d(z,u) = 1 − Q̂(z|u)`, and its soft error is
//! bounded above by `1 − exp(−L)` where `L` is its cross-entropy risk.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, shape, Result};
use crate::infotheory::fano::misclassification_upper_bound;
use crate::infotheory::measures::{check_stochastic_rows, mutual_information_unchecked};
use crate::infotheory::rate_distortion::{distortion_rate_at, distortion_rate_inverse, trace_curve, BetaGrid};
use crate::nn::Matrix;

/// Slack allowed on the lower-bound comparison for solver error.
pub const LOWER_BOUND_CHECK_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteModel {
    pub p_z: Vec<f64>,
    /// `|Z| × |U|`, rows `Q(·|z)`.
    pub channel: Matrix,
    /// `|U| × |Z|`, rows `Q̂(·|u)`.
    pub classifier: Matrix,
}

impl DiscreteModel {
    pub fn new(p_z: Vec<f64>, channel: Matrix, classifier: Matrix) -> Result<Self> {
        let m = Self {
            p_z,
            channel,
            classifier,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let nz = self.p_z.len();
        let nu = self.channel.cols();
        if self.channel.rows() != nz || self.classifier.shape() != (nu, nz) {
            return Err(shape(format!(
                "channel {:?} and classifier {:?} do not fit |Z| = {nz}",
                self.channel.shape(),
                self.classifier.shape()
            )));
        }
        check_stochastic_rows(&Matrix::from_vec(1, nz, self.p_z.clone())?, "P_Z")?;
        check_stochastic_rows(&self.channel, "channel")?;
        check_stochastic_rows(&self.classifier, "classifier")?;
        Ok(())
    }

    /// Random model with both alphabets drawn from `2..=max_alphabet` and
    /// every distribution drawn uniformly from its simplex.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_alphabet: usize) -> Self {
        let max = max_alphabet.max(2);
        let nz = rng.random_range(2..=max);
        let nu = rng.random_range(2..=max);
        let p_z = simplex_point(rng, nz);
        let mut channel = Matrix::zeros(nz, nu);
        for z in 0..nz {
            channel.row_mut(z).copy_from_slice(&simplex_point(rng, nu));
        }
        let mut classifier = Matrix::zeros(nu, nz);
        for u in 0..nu {
            classifier.row_mut(u).copy_from_slice(&simplex_point(rng, nz));
        }
        Self {
            p_z,
            channel,
            classifier,
        }
    }

    pub fn n_z(&self) -> usize {
        self.p_z.len()
    }

    pub fn n_u(&self) -> usize {
        self.channel.cols()
    }

    pub fn mutual_information(&self) -> f64 {
        mutual_information_unchecked(&self.p_z, &self.channel)
    }

    /// `d(z,u) = 1 − Q̂(z|u)`, laid out `|Z| × |U|`.
    pub fn distortion(&self) -> Matrix {
        let mut d = Matrix::zeros(self.n_z(), self.n_u());
        for z in 0..self.n_z() {
            for u in 0..self.n_u() {
                d.set(z, u, 1.0 - self.classifier.get(u, z));
            }
        }
        d
    }

    fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for z in 0..self.n_z() {
            for u in 0..self.n_u() {
                let w = self.p_z[z] * self.channel.get(z, u);
                if w > 0.0 {
                    acc += w * f(self.classifier.get(u, z));
                }
            }
        }
        acc
    }

    /// Soft misclassification `1 − E[Q̂(Z|U)]`.
    pub fn soft_error(&self) -> f64 {
        1.0 - self.expectation(|q| q)
    }

    /// Cross-entropy risk `E[−log Q̂(Z|U)]`; infinite if the classifier puts
    /// zero mass on a reachable pair.
    pub fn cross_entropy_risk(&self) -> f64 {
        self.expectation(|q| if q > 0.0 { -q.ln() } else { f64::INFINITY })
    }
}

fn simplex_point<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    // normalised unit exponentials are uniform on the simplex
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCheck {
    pub error: f64,
    pub mutual_information: f64,
    /// Bound read off the tabulated curve.
    pub tabulated_bound: f64,
    /// Bound after refining the slope at `I(Z;U)`.
    pub bound: f64,
    pub holds: bool,
}

/// Exact error versus `R⁻¹(I(Z;U))` under the classifier's own distortion.
pub fn lower_bound_check(model: &DiscreteModel, grid: &BetaGrid) -> Result<LowerBoundCheck> {
    model.validate()?;
    let d = model.distortion();
    let mi = model.mutual_information();
    let curve = trace_curve(&model.p_z, &d, grid)?;
    let tabulated_bound = distortion_rate_inverse(&curve, mi)?;
    let bound = distortion_rate_at(&model.p_z, &d, &curve, mi)?;
    let error = model.soft_error();
    Ok(LowerBoundCheck {
        error,
        mutual_information: mi,
        tabulated_bound,
        bound,
        holds: error >= bound - LOWER_BOUND_CHECK_SLACK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundCheck {
    pub error: f64,
    pub risk: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Soft error versus `1 − exp(−L)`.
pub fn upper_bound_check(model: &DiscreteModel) -> Result<UpperBoundCheck> {
    model.validate()?;
    let risk = model.cross_entropy_risk();
    if risk.is_nan() {
        return Err(input("cross-entropy risk is NaN"));
    }
    let error = model.soft_error();
    let bound = if risk.is_infinite() {
        1.0
    } else {
        misclassification_upper_bound(risk)?
    };
    Ok(UpperBoundCheck {
        error,
        risk,
        bound,
        holds: error <= bound + 1e-12,
    })
}
