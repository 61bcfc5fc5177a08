//! Entropy, conditional entropy and mutual information over finite alphabets,
//! in nats, by exact enumeration.

use crate::error::{input, shape, Result};
use crate::nn::Matrix;

const NORM_TOL: f64 = 1e-9;

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(input(format!("{what} is empty")));
    }
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(input(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > NORM_TOL {
        return Err(input(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

pub(crate) fn check_stochastic_rows(m: &Matrix, what: &str) -> Result<()> {
    for (i, r) in m.row_iter().enumerate() {
        check_distribution(r, &format!("{what} row {i}"))?;
    }
    Ok(())
}

/// `−Σ p log p` without validation; `0 log 0 = 0`.
pub fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

pub fn entropy(p: &[f64]) -> Result<f64> {
    check_distribution(p, "distribution")?;
    Ok(entropy_unchecked(p))
}

/// `H(V | W)` for a joint `P(w, v)` laid out with one row per `w`.
pub fn conditional_entropy(joint: &Matrix) -> Result<f64> {
    check_distribution(joint.as_slice(), "joint distribution")?;
    let mut h = 0.0;
    for r in joint.row_iter() {
        let pw: f64 = r.iter().sum();
        for &p in r {
            if p > 0.0 {
                h -= p * (p / pw).ln();
            }
        }
    }
    Ok(h)
}

/// Output marginal `Σ_z P(z) Q(u|z)`.
pub fn output_marginal(p_z: &[f64], channel: &Matrix) -> Vec<f64> {
    let mut q = vec![0.0; channel.cols()];
    for (pz, row) in p_z.iter().zip(channel.row_iter()) {
        for (qu, &c) in q.iter_mut().zip(row) {
            *qu += pz * c;
        }
    }
    q
}

/// `I(P_Z; Q_{U|Z})` computed as `Σ_z P(z) Σ_u Q(u|z) log(Q(u|z)/Q(u))`, which
/// equals `H(U) − H(U|Z)` but is never negative from cancellation.
pub fn mutual_information(p_z: &[f64], channel: &Matrix) -> Result<f64> {
    check_distribution(p_z, "P_Z")?;
    if channel.rows() != p_z.len() {
        return Err(shape(format!(
            "channel has {} rows for an input alphabet of {}",
            channel.rows(),
            p_z.len()
        )));
    }
    check_stochastic_rows(channel, "channel")?;
    Ok(mutual_information_unchecked(p_z, channel))
}

pub(crate) fn mutual_information_unchecked(p_z: &[f64], channel: &Matrix) -> f64 {
    let q = output_marginal(p_z, channel);
    let mut mi = 0.0;
    for (pz, row) in p_z.iter().zip(channel.row_iter()) {
        if *pz == 0.0 {
            continue;
        }
        for (&c, &qu) in row.iter().zip(&q) {
            if c > 0.0 {
                mi += pz * c * (c / qu).ln();
            }
        }
    }
    mi.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bsc(flip: f64) -> Matrix {
        Matrix::from_rows(&[[1.0 - flip, flip], [flip, 1.0 - flip]]).unwrap()
    }

    #[test]
    fn uniform_entropy() {
        let p = vec![1.0 / 30.0; 30];
        let h = entropy(&p).unwrap();
        assert!((h - 30f64.ln()).abs() < 1e-12);
        assert!((h - 3.4012).abs() < 1e-4);
    }

    #[test]
    fn independent_channel_has_no_information() {
        let ch = Matrix::from_rows(&[[0.2, 0.5, 0.3], [0.2, 0.5, 0.3]]).unwrap();
        assert!(mutual_information(&[0.4, 0.6], &ch).unwrap().abs() < 1e-15);
    }

    #[test]
    fn binary_symmetric_channel() {
        let h = |t: f64| -t * t.ln() - (1.0 - t) * (1.0 - t).ln();
        let mi = mutual_information(&[0.5, 0.5], &bsc(0.1)).unwrap();
        assert!((mi - (2f64.ln() - h(0.1))).abs() < 1e-14);
        assert!((mi - 0.368).abs() < 1e-3);

        // H(U) − H(U|Z) route agrees
        let joint = Matrix::from_rows(&[[0.45, 0.05], [0.05, 0.45]]).unwrap();
        let hu = entropy(&[0.5, 0.5]).unwrap();
        let alt = hu - conditional_entropy(&joint).unwrap();
        assert!((mi - alt).abs() < 1e-14);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(entropy(&[0.5, 0.4]).is_err());
        assert!(entropy(&[]).is_err());
        assert!(mutual_information(&[0.5, 0.5], &Matrix::filled(2, 2, 0.4)).is_err());
        assert!(mutual_information(&[1.0], &bsc(0.1)).is_err());
    }
}
