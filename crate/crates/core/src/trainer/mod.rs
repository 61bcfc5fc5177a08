//! Pretraining, adversarial schedules, attacker retraining and λ sweeps.

pub mod attacker;
pub mod config;
pub mod session;
pub mod sweep;
pub mod trinet;

pub use attacker::{train_attacker, train_attacker_on, AttackerReport, Encoded};
pub use config::{AttackerConfig, PhaseEpochs, Schedule, TrainConfig};
pub use session::{
    evaluate, train_full, BoundEstimates, DataShape, Metrics, Session, Stage, StageCounts, TrainReport, UnitLog,
};
pub use sweep::{lambda_sweep, run_point, PointOutcome, SweepRecord, CSV_COLUMNS};
pub use trinet::{Architecture, TriNet, TriOutputs, TriTrace};

use crate::data::{Dataset, Splits};

/// Borrowed train/validation/test splits.
#[derive(Debug, Clone, Copy)]
pub struct Data<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub test: &'a Dataset,
}

impl<'a> From<&'a Splits> for Data<'a> {
    fn from(s: &'a Splits) -> Self {
        Self {
            train: &s.train,
            val: &s.val,
            test: &s.test,
        }
    }
}
