//! Training configuration.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::trainer::Architecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Alternate blocks that update only the branches or only the encoder.
    Toggle,
    /// Update encoder and branches from every minibatch.
    Simultaneous,
}

/// Caps on epochs (pretraining) and rounds (adversarial phase).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseEpochs {
    pub regular: usize,
    pub private: usize,
    pub adversarial: usize,
}

impl Default for PhaseEpochs {
    fn default() -> Self {
        Self {
            regular: 100,
            private: 100,
            adversarial: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackerConfig {
    /// Hidden widths; `None` cascades the encoder and private-branch widths.
    pub hidden: Option<Vec<usize>>,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub dropout: f64,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 64,
            epochs: 100,
            patience: 10,
            dropout: 0.1,
        }
    }
}

impl AttackerConfig {
    pub fn hidden_for(&self, arch: &Architecture) -> Vec<usize> {
        self.hidden
            .clone()
            .unwrap_or_else(|| arch.encoder.iter().chain(&arch.private).copied().collect())
    }

    fn problems(&self, out: &mut Vec<String>) {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            out.push(format!("attacker.lr must be > 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            out.push(format!("attacker.momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            out.push("attacker.batch_size must be ≥ 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            out.push(format!("attacker.dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.hidden.as_ref().is_some_and(|h| h.contains(&0)) {
            out.push("attacker.hidden widths must be positive".into());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub encoder_lr: f64,
    pub branch_lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Samples per alternation block; `0` means the training-set size.
    pub block_size: usize,
    /// Consecutive blocks of branch updates in each adversarial round.
    pub branch_passes: usize,
    /// Consecutive blocks of encoder updates in each adversarial round.
    pub encoder_passes: usize,
    pub epochs: PhaseEpochs,
    /// Evaluations without validation improvement before a phase stops.
    pub patience: usize,
    pub dropout: f64,
    pub seed: u64,
    pub schedule: Schedule,
    pub architecture: Architecture,
    pub attacker: AttackerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            encoder_lr: 0.002,
            branch_lr: 0.01,
            momentum: 0.9,
            batch_size: 64,
            block_size: 0,
            branch_passes: 1,
            encoder_passes: 1,
            epochs: PhaseEpochs::default(),
            patience: 10,
            dropout: 0.1,
            seed: 0,
            schedule: Schedule::Toggle,
            architecture: Architecture::reduced(),
            attacker: AttackerConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, in a stable order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            out.push(format!("lambda must be finite and ≥ 0, got {}", self.lambda));
        }
        for (name, v) in [("encoder_lr", self.encoder_lr), ("branch_lr", self.branch_lr)] {
            if !(v > 0.0) || !v.is_finite() {
                out.push(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.encoder_lr > self.branch_lr {
            out.push(format!(
                "encoder_lr ({}) must not exceed branch_lr ({})",
                self.encoder_lr, self.branch_lr
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            out.push(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            out.push("batch_size must be ≥ 1".into());
        }
        if self.branch_passes == 0 || self.encoder_passes == 0 {
            out.push("branch_passes and encoder_passes must be ≥ 1".into());
        }
        if self.patience == 0 {
            out.push("patience must be ≥ 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            out.push(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if let Err(e) = self.architecture.validate() {
            out.push(e.to_string());
        }
        self.attacker.problems(&mut out);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(config(p.join("; ")))
        }
    }

    /// Config error if the block is larger than the training set.
    pub fn block_for(&self, train_len: usize) -> Result<usize> {
        match self.block_size {
            0 => Ok(train_len),
            n if n <= train_len => Ok(n),
            n => Err(config(format!(
                "block_size {n} exceeds the {train_len} training samples"
            ))),
        }
    }
}
