//! λ sweeps: one full training run per multiplier, records streamed to a sink.

use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::eval::LOWER_BOUND_SLACK;
use crate::trainer::config::{Schedule, TrainConfig};
use crate::trainer::session::{train_full, TrainReport};
use crate::trainer::Data;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub lambda: f64,
    pub seed: u64,
    pub schedule: Schedule,
    pub regular_accuracy_train: f64,
    pub regular_accuracy_val: f64,
    pub regular_accuracy_test: f64,
    /// Co-trained private branch on the test split.
    pub private_branch_accuracy_test: f64,
    /// Retrained attacker on the test split.
    pub attacker_accuracy_test: f64,
    pub l_r_test: f64,
    pub l_p_test: f64,
    pub l_p_obj_test: f64,
    pub attacker_l_p_test: f64,
    /// `g⁻¹(min(attacker L_p, log|Z|))`.
    pub lower_bound: f64,
    pub lower_bound_branch: f64,
    pub lower_bound_entropy_variant: f64,
    /// `1 − exp(−L_r)` on the test split.
    pub upper_bound: f64,
    /// `lower_bound > 1 − attacker accuracy + 0.05`.
    pub bound_flag: bool,
    pub error: Option<String>,
}

pub const CSV_COLUMNS: [&str; 19] = [
    "lambda",
    "seed",
    "schedule",
    "regular_accuracy_train",
    "regular_accuracy_val",
    "regular_accuracy_test",
    "private_branch_accuracy_test",
    "attacker_accuracy_test",
    "l_r_test",
    "l_p_test",
    "l_p_obj_test",
    "attacker_l_p_test",
    "lower_bound",
    "lower_bound_branch",
    "lower_bound_entropy_variant",
    "upper_bound",
    "bound_flag",
    "error",
    "ok",
];

impl SweepRecord {
    pub fn from_report(r: &TrainReport) -> Self {
        let (att_acc, att_ce) = r
            .attacker
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |a| (a.test_accuracy, a.test_cross_entropy));
        let lower = r.bounds.attacker.unwrap_or(f64::NAN);
        Self {
            lambda: r.lambda,
            seed: r.seed,
            schedule: r.schedule,
            regular_accuracy_train: r.train.regular_accuracy,
            regular_accuracy_val: r.val.regular_accuracy,
            regular_accuracy_test: r.test.regular_accuracy,
            private_branch_accuracy_test: r.test.private_accuracy,
            attacker_accuracy_test: att_acc,
            l_r_test: r.test.l_r,
            l_p_test: r.test.l_p,
            l_p_obj_test: r.test.l_p_obj,
            attacker_l_p_test: att_ce,
            lower_bound: lower,
            lower_bound_branch: r.bounds.branch,
            lower_bound_entropy_variant: r.bounds.entropy_variant,
            upper_bound: r.bounds.regular_upper,
            bound_flag: lower > 1.0 - att_acc + LOWER_BOUND_SLACK,
            error: None,
        }
    }

    pub fn failed(lambda: f64, cfg: &TrainConfig, error: String) -> Self {
        Self {
            lambda,
            seed: cfg.seed,
            schedule: cfg.schedule,
            regular_accuracy_train: f64::NAN,
            regular_accuracy_val: f64::NAN,
            regular_accuracy_test: f64::NAN,
            private_branch_accuracy_test: f64::NAN,
            attacker_accuracy_test: f64::NAN,
            l_r_test: f64::NAN,
            l_p_test: f64::NAN,
            l_p_obj_test: f64::NAN,
            attacker_l_p_test: f64::NAN,
            lower_bound: f64::NAN,
            lower_bound_branch: f64::NAN,
            lower_bound_entropy_variant: f64::NAN,
            upper_bound: f64::NAN,
            bound_flag: false,
            error: Some(error),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        let f = |v: f64| if v.is_nan() { String::new() } else { format!("{v:?}") };
        let schedule = match self.schedule {
            Schedule::Toggle => "toggle",
            Schedule::Simultaneous => "simultaneous",
        };
        let err = self
            .error
            .as_deref()
            .map(|e| format!("\"{}\"", e.replace('"', "\"\"")))
            .unwrap_or_default();
        [
            f(self.lambda),
            self.seed.to_string(),
            schedule.to_string(),
            f(self.regular_accuracy_train),
            f(self.regular_accuracy_val),
            f(self.regular_accuracy_test),
            f(self.private_branch_accuracy_test),
            f(self.attacker_accuracy_test),
            f(self.l_r_test),
            f(self.l_p_test),
            f(self.l_p_obj_test),
            f(self.attacker_l_p_test),
            f(self.lower_bound),
            f(self.lower_bound_branch),
            f(self.lower_bound_entropy_variant),
            f(self.upper_bound),
            self.bound_flag.to_string(),
            err,
            self.is_ok().to_string(),
        ]
        .join(",")
    }
}

/// One finished sweep point.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub record: SweepRecord,
    pub report: Option<TrainReport>,
    pub wall_time_s: f64,
}

/// Runs one λ with `template`'s other settings.
pub fn run_point(template: &TrainConfig, lambda: f64, data: Data<'_>) -> PointOutcome {
    let cfg = TrainConfig {
        lambda,
        ..template.clone()
    };
    let start = Instant::now();
    let (record, report) = match train_full(cfg.clone(), data) {
        Ok((_, report)) => (SweepRecord::from_report(&report), Some(report)),
        Err(e) => {
            log::error!("λ = {lambda}: {e}");
            (SweepRecord::failed(lambda, &cfg, e.to_string()), None)
        }
    };
    PointOutcome {
        record,
        report,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// Trains one network per λ. `sink` receives each outcome as soon as it is
/// finished, in completion order and always on the calling thread; the
/// returned records follow the order of `lambdas`. Failed points are
/// recorded and the sweep continues.
pub fn lambda_sweep<F>(
    data: Data<'_>,
    template: &TrainConfig,
    lambdas: &[f64],
    workers: usize,
    mut sink: F,
) -> Result<Vec<SweepRecord>>
where
    F: FnMut(&PointOutcome),
{
    if lambdas.is_empty() {
        return Err(config("λ grid is empty"));
    }
    template.validate()?;
    let workers = workers.clamp(1, lambdas.len());
    let mut out: Vec<Option<SweepRecord>> = vec![None; lambdas.len()];
    if workers == 1 {
        for (i, &l) in lambdas.iter().enumerate() {
            let p = run_point(template, l, data);
            sink(&p);
            out[i] = Some(p.record);
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<(usize, PointOutcome)>();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= lambdas.len() {
                        break;
                    }
                    let p = run_point(template, lambdas[i], data);
                    if tx.send((i, p)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for (i, p) in rx {
                sink(&p);
                out[i] = Some(p.record);
            }
        });
    }
    Ok(out.into_iter().map(|r| r.expect("every point reports")).collect())
}
