//! Fano-type conversion between entropies and misclassification probabilities.
//!
//! `g(t) = t·log(|Z|−1) + H(t)` is continuous and increasing on
//! `[0, 1−1/|Z|]`, running from `g(0) = 0` to `g(1−1/|Z|) = log|Z|`. Its inverse
//! turns a conditional-entropy estimate into a lower bound on the error of any
//! classifier of `Z`.

use crate::error::{config, input, Result};
use crate::objectives::EmpiricalDistribution;

fn check_alphabet(n_classes: usize) -> Result<()> {
    if n_classes < 2 {
        return Err(config(format!("alphabet size must be ≥ 2, got {n_classes}")));
    }
    Ok(())
}

/// Binary entropy in nats, `0 log 0 = 0`.
pub fn binary_entropy(t: f64) -> f64 {
    let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    term(t) + term(1.0 - t)
}

pub fn g(t: f64, n_classes: usize) -> Result<f64> {
    check_alphabet(n_classes)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(input(format!("g is defined on [0, 1], got {t}")));
    }
    let slope = ((n_classes - 1) as f64).ln();
    Ok(t * slope + binary_entropy(t))
}

/// Bisection tolerance on the argument of `g`.
pub const G_INVERSE_TOL: f64 = 1e-12;

/// `g⁻¹(t)`: `0` for `t ≤ 0`, `1 − 1/|Z|` for `t ≥ log|Z|`, otherwise the root
/// of `g(ε) = t` in `[0, 1 − 1/|Z|]`.
pub fn g_inverse(t: f64, n_classes: usize) -> Result<f64> {
    check_alphabet(n_classes)?;
    if t.is_nan() {
        return Err(input("g⁻¹ of NaN"));
    }
    let top = 1.0 - 1.0 / n_classes as f64;
    if t <= 0.0 {
        return Ok(0.0);
    }
    if t >= (n_classes as f64).ln() {
        return Ok(top);
    }
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..200 {
        if hi - lo <= G_INVERSE_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid, n_classes)? < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Estimated lower bound on any private classifier's error from the held-out
/// private cross-entropy: `g⁻¹(min(L_p, log|Z|))`. The cross-entropy stands in
/// for `H(Z|U)`, so this is an estimate rather than a certified bound.
pub fn private_error_lower_bound(l_p_test: f64, n_classes: usize) -> Result<f64> {
    check_alphabet(n_classes)?;
    g_inverse(l_p_test.min((n_classes as f64).ln()), n_classes)
}

/// Variant that does not assume `H(P̂_Z) = log|Z|`: the mutual information is
/// approximated by `H(P̂_Z) − L_p`, giving `g⁻¹(log|Z| − H(P̂_Z) + L_p)`.
pub fn private_error_lower_bound_entropy_variant(l_p_test: f64, p_hat_z: &EmpiricalDistribution) -> Result<f64> {
    let k = p_hat_z.len();
    check_alphabet(k)?;
    let log_k = (k as f64).ln();
    let arg = log_k - (p_hat_z.entropy() - l_p_test);
    g_inverse(arg.min(log_k), k)
}

/// `1 − exp(−L)`: upper bound on the soft misclassification probability of a
/// classifier with cross-entropy risk `L`.
pub fn misclassification_upper_bound(risk: f64) -> Result<f64> {
    if !(risk >= 0.0) {
        return Err(input(format!("cross-entropy risk must be ≥ 0, got {risk}")));
    }
    Ok(-(-risk).exp_m1())
}
