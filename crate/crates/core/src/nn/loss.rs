//! Softmax and the fused softmax cross-entropy.

use crate::error::{input, shape, Result};

/// Numerically stable softmax of one row, shifted by its max.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

/// `log Σ exp(logits)`, computed with the max-shift.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Cross-entropy `⟨target, −log softmax(logits)⟩` in nats, and its gradient
/// with respect to the logits, `softmax(logits) − target`.
pub fn softmax_cross_entropy(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() || target.is_empty() {
        return Err(shape("softmax cross-entropy of an empty vector"));
    }
    if logits.len() != target.len() {
        return Err(shape(format!(
            "{} logits against a target over {} classes",
            logits.len(),
            target.len()
        )));
    }
    let total: f64 = target.iter().sum();
    if (total - 1.0).abs() > 1e-9 || target.iter().any(|&t| t < 0.0) {
        return Err(input(format!("target is not a distribution (sum {total})")));
    }
    let lse = log_sum_exp(logits);
    let mut loss = 0.0;
    for (&l, &t) in logits.iter().zip(target) {
        if t != 0.0 {
            loss += t * (lse - l);
        }
    }
    let mut grad = softmax(logits);
    for (g, t) in grad.iter_mut().zip(target) {
        *g -= t;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_cost_log_k() {
        let mut target = vec![0.0; 10];
        target[3] = 1.0;
        let (loss, _) = softmax_cross_entropy(&[0.0; 10], &target).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_is_free() {
        let target = [0.0, 1.0, 0.0];
        let (loss, grad) = softmax_cross_entropy(&[0.0, 1000.0, 0.0], &target).unwrap();
        assert!(loss.abs() < 1e-300 || loss == 0.0);
        assert!(grad.iter().all(|g| g.abs() < 1e-300));
    }

    #[test]
    fn large_logits_stay_finite() {
        let p = softmax(&[1e4, -1e4, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let k = rng.random_range(2..12);
            let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut target: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let s: f64 = target.iter().sum();
            target.iter_mut().for_each(|t| *t /= s);
            let (_, grad) = softmax_cross_entropy(&logits, &target).unwrap();
            let h = 1e-5;
            for j in 0..k {
                let mut up = logits.clone();
                up[j] += h;
                let mut dn = logits.clone();
                dn[j] -= h;
                let fd = (softmax_cross_entropy(&up, &target).unwrap().0
                    - softmax_cross_entropy(&dn, &target).unwrap().0)
                    / (2.0 * h);
                let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-4);
                assert!(rel < 1e-6, "coordinate {j}: fd {fd} analytic {}", grad[j]);
            }
        }
    }

    #[test]
    fn rejects_empty_and_unnormalized() {
        assert!(softmax_cross_entropy(&[], &[]).is_err());
        assert!(softmax_cross_entropy(&[0.0, 0.0], &[0.5, 0.4]).is_err());
        assert!(softmax_cross_entropy(&[0.0, 0.0], &[1.0]).is_err());
    }
}
