//! Accuracies, cross-entropies and bound comparisons on held-out predictions.

use serde::{Deserialize, Serialize};

use crate::error::{input, shape, Error, Result};
use crate::infotheory::{misclassification_upper_bound, private_error_lower_bound};
use crate::nn::Matrix;
use crate::objectives::EmpiricalDistribution;

/// Slack on the approximate private-task lower bound before a report is flagged.
pub const LOWER_BOUND_SLACK: f64 = 0.05;

fn check(predictions: &Matrix, labels: &[usize], weights: Option<&[f64]>) -> Result<()> {
    if predictions.rows() != labels.len() {
        return Err(shape(format!(
            "{} prediction rows for {} labels",
            predictions.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(input("no samples"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= predictions.cols()) {
        return Err(input(format!("label {bad} outside [0, {})", predictions.cols())));
    }
    if let Some(w) = weights {
        if w.len() != labels.len() {
            return Err(shape("one weight per sample required"));
        }
        let s: f64 = w.iter().sum();
        if w.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(input(format!("weights must be non-negative and sum to 1 (sum {s})")));
        }
    }
    Ok(())
}

fn weighted_mean(values: impl Iterator<Item = f64>, weights: Option<&[f64]>, n: usize) -> f64 {
    match weights {
        None => values.sum::<f64>() / n as f64,
        Some(w) => values.zip(w).filter(|(_, &w)| w != 0.0).map(|(v, w)| v * w).sum(),
    }
}

/// Argmax match rate; ties go to the lowest class index.
pub fn accuracy(predictions: &Matrix, labels: &[usize]) -> Result<f64> {
    check(predictions, labels, None)?;
    let hits = predictions
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Statistics of one label task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub accuracy: f64,
    /// Mean `−log Q̂(label|x)`, nats.
    pub cross_entropy: f64,
    /// `1 − mean Q̂(label|x)`.
    pub soft_error: f64,
    /// Accuracy of always guessing the most frequent class.
    pub majority_accuracy: f64,
    pub uniform_accuracy: f64,
}

pub fn task_report(predictions: &Matrix, labels: &[usize], weights: Option<&[f64]>) -> Result<TaskReport> {
    check(predictions, labels, weights)?;
    let n = labels.len();
    let k = predictions.cols();
    let argmax = predictions.argmax_rows();
    let hit = argmax.iter().zip(labels).map(|(p, l)| if p == l { 1.0 } else { 0.0 });
    let accuracy = weighted_mean(hit, weights, n);
    let p_true = |i: usize| predictions.get(i, labels[i]);
    let cross_entropy = weighted_mean((0..n).map(|i| -p_true(i).max(f64::MIN_POSITIVE).ln()), weights, n);
    let soft_error = 1.0 - weighted_mean((0..n).map(p_true), weights, n);
    let mut freq = vec![0.0; k];
    for (i, &l) in labels.iter().enumerate() {
        freq[l] += weights.map_or(1.0, |w| w[i]);
    }
    if weights.is_none() {
        freq.iter_mut().for_each(|f| *f /= n as f64);
    }
    Ok(TaskReport {
        accuracy,
        cross_entropy,
        soft_error,
        majority_accuracy: freq.iter().copied().fold(0.0, f64::max),
        uniform_accuracy: 1.0 / k as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub regular: TaskReport,
    pub private: TaskReport,
    /// Mean `⟨P̂_Z, −log Q̂(·|x)⟩` of the private predictions.
    pub private_objective_loss: f64,
    /// `g⁻¹(min(L_p, log|Z|))`.
    pub private_error_lower_bound: f64,
    /// `1 − exp(−L_r)`, bounding the regular soft error.
    pub regular_error_upper_bound: f64,
    /// The lower bound exceeds the observed private error by more than the slack.
    pub lower_bound_flag: bool,
}

/// Assembles an [`EvalReport`]. Fails if the regular soft error exceeds its
/// upper bound, which cannot happen for genuine probability rows.
pub fn build_report(
    regular: &Matrix,
    private: &Matrix,
    y: &[usize],
    z: &[usize],
    p_hat_z: &EmpiricalDistribution,
    weights: Option<&[f64]>,
) -> Result<EvalReport> {
    let reg = task_report(regular, y, weights)?;
    let prv = task_report(private, z, weights)?;
    if p_hat_z.len() != private.cols() {
        return Err(shape("P̂_Z size does not match the private predictions"));
    }
    let n = z.len();
    let obj = weighted_mean(
        (0..n).map(|i| {
            private
                .row(i)
                .iter()
                .zip(&p_hat_z.probs)
                .filter(|(_, &w)| w != 0.0)
                .map(|(&q, &w)| -w * q.max(f64::MIN_POSITIVE).ln())
                .sum::<f64>()
        }),
        weights,
        n,
    );
    let lower = private_error_lower_bound(prv.cross_entropy, private.cols())?;
    let upper = misclassification_upper_bound(reg.cross_entropy)?;
    if reg.soft_error > upper + 1e-9 {
        return Err(Error::Numeric(format!(
            "regular soft error {} exceeds 1 − exp(−L_r) = {upper}",
            reg.soft_error
        )));
    }
    Ok(EvalReport {
        samples: n,
        lower_bound_flag: lower > 1.0 - prv.accuracy + LOWER_BOUND_SLACK,
        regular: reg,
        private: prv,
        private_objective_loss: obj,
        private_error_lower_bound: lower,
        regular_error_upper_bound: upper,
    })
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "samples,regular_accuracy,regular_cross_entropy,regular_soft_error,\
private_accuracy,private_cross_entropy,private_soft_error,private_majority_accuracy,\
private_objective_loss,private_error_lower_bound,regular_error_upper_bound,lower_bound_flag";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            self.samples,
            self.regular.accuracy,
            self.regular.cross_entropy,
            self.regular.soft_error,
            self.private.accuracy,
            self.private.cross_entropy,
            self.private.soft_error,
            self.private.majority_accuracy,
            self.private_objective_loss,
            self.private_error_lower_bound,
            self.regular_error_upper_bound,
            self.lower_bound_flag
        )
    }
}
