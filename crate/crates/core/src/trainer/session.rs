//! Resumable training run: pretrain the encoder with the regular branch,
//! pretrain the private branch on the frozen encoder, run the adversarial
//! phase, then retrain an attacker on the final representation.
//!
//! All state (parameters, optimizer velocities, generator, sampler, stage
//! counters) lives in [`Session`] and serializes to JSON, so a run stopped at
//! any unit boundary and resumed is bit-identical to an uninterrupted one.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, Error, Result};
use crate::eval::{accuracy, build_report, EvalReport};
use crate::infotheory::{
    misclassification_upper_bound, private_error_lower_bound, private_error_lower_bound_entropy_variant,
};
use crate::nn::{nesterov_step, DropoutSpec, Matrix, Mode, OptimizerState};
use crate::objectives::{
    batch_losses, branch_gradients, encoder_gradient, loss_gradients, private_loss, private_objective_loss,
    regular_loss, simultaneous_gradients, EmpiricalDistribution, Freeze, LossKind, Targets,
};
use crate::trainer::attacker::{train_attacker, AttackerReport};
use crate::trainer::config::{Schedule, TrainConfig};
use crate::trainer::{Data, TriNet};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PretrainRegular,
    PretrainPrivate,
    Adversarial,
    Attacker,
    Done,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::PretrainRegular => "pretrain_regular",
            Stage::PretrainPrivate => "pretrain_private",
            Stage::Adversarial => "adversarial",
            Stage::Attacker => "attacker",
            Stage::Done => "done",
        }
    }
}

/// Losses (nats) and accuracies of the network on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l_r: f64,
    pub l_p: f64,
    pub l_p_obj: f64,
    /// `L_r + λ|L_p_obj − L_p|`.
    pub objective: f64,
    pub regular_accuracy: f64,
    pub private_accuracy: f64,
}

pub fn evaluate(net: &TriNet, d: &Dataset, p_hat_z: &EmpiricalDistribution, lambda: f64) -> Result<Metrics> {
    let out = net.predict(&d.x)?;
    let l_r = regular_loss(&out.regular, &d.y)?;
    let l_p = private_loss(&out.private, &d.z)?;
    let l_p_obj = private_objective_loss(&out.private, p_hat_z)?;
    Ok(Metrics {
        l_r,
        l_p,
        l_p_obj,
        objective: l_r + lambda * (l_p_obj - l_p).abs(),
        regular_accuracy: accuracy(&out.regular, &d.y)?,
        private_accuracy: accuracy(&out.private, &d.z)?,
    })
}

/// One completed epoch or adversarial round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitLog {
    pub stage: Stage,
    pub index: usize,
    /// Mean minibatch value of the loss the stage minimizes.
    pub train_loss: f64,
    pub val: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
struct StageState {
    completed: usize,
    best: Option<f64>,
    since_best: usize,
    best_net: Option<TriNet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Optimizers {
    encoder: OptimizerState,
    regular: OptimizerState,
    private: OptimizerState,
}

impl Optimizers {
    fn fresh(net: &TriNet, cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            encoder: OptimizerState::new(&net.encoder, cfg.encoder_lr, cfg.momentum)?,
            regular: OptimizerState::new(&net.regular, cfg.branch_lr, cfg.momentum)?,
            private: OptimizerState::new(&net.private, cfg.branch_lr, cfg.momentum)?,
        })
    }
}

/// Draws blocks of training indices from a shuffled order without
/// replacement, reshuffling once the order is used up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sampler {
    order: Vec<usize>,
    cursor: usize,
}

impl Sampler {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            cursor: n,
        }
    }

    fn draw<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            let take = (k - out.len()).min(self.order.len() - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        out
    }
}

/// Input geometry a session was created for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataShape {
    pub dim: usize,
    pub n_regular: usize,
    pub n_private: usize,
    pub train_len: usize,
}

impl DataShape {
    fn of(data: Data<'_>) -> Result<Self> {
        let t = data.train;
        for (name, d) in [("val", data.val), ("test", data.test)] {
            if d.dim() != t.dim() || d.n_regular != t.n_regular || d.n_private != t.n_private {
                return Err(Error::Input(format!(
                    "{name} split geometry ({}, {}, {}) differs from train ({}, {}, {})",
                    d.dim(),
                    d.n_regular,
                    d.n_private,
                    t.dim(),
                    t.n_regular,
                    t.n_private
                )));
            }
            if d.is_empty() {
                return Err(Error::Input(format!("{name} split is empty")));
            }
        }
        if t.is_empty() {
            return Err(Error::Input("train split is empty".into()));
        }
        Ok(Self {
            dim: t.dim(),
            n_regular: t.n_regular,
            n_private: t.n_private,
            train_len: t.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub format: u32,
    pub config: TrainConfig,
    pub shape: DataShape,
    pub net: TriNet,
    pub stage: Stage,
    /// Minibatch updates applied so far.
    pub updates: usize,
    pub history: Vec<UnitLog>,
    pub attacker: Option<AttackerReport>,
    optim: Optimizers,
    rng: ChaCha8Rng,
    sampler: Sampler,
    state: StageState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimates {
    /// `g⁻¹(min(L_p, log|Z|))` from the retrained attacker's test cross-entropy.
    pub attacker: Option<f64>,
    /// Same, from the co-trained private branch.
    pub branch: f64,
    /// `g⁻¹(log|Z| − H(P̂_Z) + L_p)` with the attacker's (else the branch's)
    /// cross-entropy and the test-split `P̂_Z`.
    pub entropy_variant: f64,
    /// `1 − exp(−L_r)` on the test split.
    pub regular_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub pretrain_regular: usize,
    pub pretrain_private: usize,
    pub adversarial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub lambda: f64,
    pub seed: u64,
    pub schedule: Schedule,
    pub updates: usize,
    pub stages: StageCounts,
    pub train: Metrics,
    pub val: Metrics,
    pub test: Metrics,
    pub test_report: EvalReport,
    pub attacker: Option<AttackerReport>,
    pub bounds: BoundEstimates,
    pub history: Vec<UnitLog>,
}

struct Batch {
    x: Matrix,
    y: Vec<usize>,
    z: Vec<usize>,
}

fn gather(d: &Dataset, idx: &[usize]) -> Batch {
    Batch {
        x: d.x.select_rows(idx),
        y: idx.iter().map(|&i| d.y[i]).collect(),
        z: idx.iter().map(|&i| d.z[i]).collect(),
    }
}

impl Session {
    pub fn new(config: TrainConfig, data: Data<'_>) -> Result<Self> {
        let mut problems = config.problems();
        let shape = DataShape::of(data)?;
        if let Err(e) = config.block_for(shape.train_len) {
            problems.push(e.to_string());
        }
        if !problems.is_empty() {
            return Err(config_error(problems));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let net = TriNet::new(
            shape.dim,
            &config.architecture,
            shape.n_regular,
            shape.n_private,
            &mut rng,
        )?;
        let optim = Optimizers::fresh(&net, &config)?;
        Ok(Self {
            format: CHECKPOINT_FORMAT,
            shape,
            net,
            stage: Stage::PretrainRegular,
            updates: 0,
            history: Vec::new(),
            attacker: None,
            optim,
            rng,
            sampler: Sampler::new(shape.train_len),
            state: StageState::default(),
            config,
        })
    }

    pub fn is_done(&self) -> bool {
        self.stage == Stage::Done
    }

    /// Runs until done or until `budget` units (epochs, rounds, the attacker
    /// fit) have been performed. Returns whether the run is complete.
    pub fn run(&mut self, data: Data<'_>, budget: Option<usize>) -> Result<bool> {
        if DataShape::of(data)? != self.shape {
            return Err(Error::State(
                "data does not match the session's recorded geometry".into(),
            ));
        }
        let p_hat_z = data.train.p_hat_z()?;
        let mut done_units = 0;
        while self.stage != Stage::Done {
            if self.stage_finished() {
                self.finish_stage()?;
                continue;
            }
            if budget.is_some_and(|b| done_units >= b) {
                return Ok(false);
            }
            self.unit(data, &p_hat_z)?;
            done_units += 1;
        }
        Ok(true)
    }

    fn stage_finished(&self) -> bool {
        let e = &self.config.epochs;
        let cap = match self.stage {
            Stage::PretrainRegular => e.regular,
            Stage::PretrainPrivate => e.private,
            Stage::Adversarial => e.adversarial,
            Stage::Attacker => 1,
            Stage::Done => return true,
        };
        self.state.completed >= cap || self.state.since_best >= self.config.patience
    }

    fn finish_stage(&mut self) -> Result<()> {
        let best = self.state.best_net.take();
        self.stage = match self.stage {
            Stage::PretrainRegular => {
                if let Some(b) = best {
                    self.net.encoder = b.encoder;
                    self.net.regular = b.regular;
                }
                Stage::PretrainPrivate
            }
            Stage::PretrainPrivate => {
                if let Some(b) = best {
                    self.net.private = b.private;
                }
                Stage::Adversarial
            }
            Stage::Adversarial => Stage::Attacker,
            Stage::Attacker | Stage::Done => Stage::Done,
        };
        log::debug!("entering stage {}", self.stage.name());
        self.state = StageState::default();
        self.optim = Optimizers::fresh(&self.net, &self.config)?;
        Ok(())
    }

    fn dropout(&self) -> DropoutSpec {
        DropoutSpec::new(self.config.dropout, true, true)
    }

    fn diverged(&self, snapshot: TriNet, detail: String) -> Error {
        Error::Diverged {
            phase: self.stage.name().to_string(),
            step: self.updates,
            detail,
            last_good: Box::new(snapshot),
        }
    }

    fn unit(&mut self, data: Data<'_>, p_hat_z: &EmpiricalDistribution) -> Result<()> {
        if self.stage == Stage::Attacker {
            let seed = self.rng.random::<u64>();
            let hidden = self.config.attacker.hidden_for(&self.config.architecture);
            let (_, report) = train_attacker(&self.net.encoder, data, &hidden, &self.config.attacker, seed)?;
            log::info!(
                "attacker test accuracy {:.4} (majority {:.4})",
                report.test_accuracy,
                report.test_majority_accuracy
            );
            self.attacker = Some(report);
            self.state.completed += 1;
            return Ok(());
        }
        let snapshot = self.net.clone();
        let result = match self.stage {
            Stage::PretrainRegular | Stage::PretrainPrivate => self.pretrain_epoch(data.train, p_hat_z),
            Stage::Adversarial => match self.config.schedule {
                Schedule::Toggle => self.toggle_round(data.train, p_hat_z),
                Schedule::Simultaneous => self.simultaneous_round(data.train, p_hat_z),
            },
            Stage::Attacker | Stage::Done => unreachable!("handled above"),
        };
        let train_loss = match result {
            Ok(l) if l.is_finite() => l,
            Ok(l) => return Err(self.diverged(snapshot, format!("mean training loss {l}"))),
            Err(Error::Numeric(msg)) => return Err(self.diverged(snapshot, msg)),
            Err(e) => return Err(e),
        };
        let val = evaluate(&self.net, data.val, p_hat_z, self.config.lambda)?;
        let criterion = match self.stage {
            Stage::PretrainRegular => val.l_r,
            Stage::PretrainPrivate => val.l_p,
            _ => val.objective,
        };
        if !criterion.is_finite() {
            return Err(self.diverged(snapshot, format!("validation criterion {criterion}")));
        }
        self.state.completed += 1;
        if self.state.best.is_none_or(|b| criterion < b) {
            self.state.best = Some(criterion);
            self.state.since_best = 0;
            if matches!(self.stage, Stage::PretrainRegular | Stage::PretrainPrivate) {
                self.state.best_net = Some(self.net.clone());
            }
        } else {
            self.state.since_best += 1;
        }
        log::info!(
            "{} {}: train {:.5} val L_r {:.5} L_p {:.5} L_p_obj {:.5} acc_r {:.4} acc_p {:.4}",
            self.stage.name(),
            self.state.completed,
            train_loss,
            val.l_r,
            val.l_p,
            val.l_p_obj,
            val.regular_accuracy,
            val.private_accuracy
        );
        self.history.push(UnitLog {
            stage: self.stage,
            index: self.state.completed,
            train_loss,
            val,
        });
        Ok(())
    }

    fn pretrain_epoch(&mut self, train: &Dataset, p_hat_z: &EmpiricalDistribution) -> Result<f64> {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let regular = self.stage == Stage::PretrainRegular;
        let dropout = self.dropout();
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let b = gather(train, chunk);
            let targets = Targets {
                y: &b.y,
                z: &b.z,
                p_hat_z,
            };
            let trace = self.net.forward(&b.x, &dropout, Mode::Train, &mut self.rng)?;
            let losses = batch_losses(&trace, &targets, self.config.lambda)?;
            let (loss, kind, freeze) = if regular {
                (
                    losses.l_r,
                    LossKind::Regular,
                    Freeze {
                        private: true,
                        ..Freeze::NONE
                    },
                )
            } else {
                (
                    losses.l_p,
                    LossKind::Private,
                    Freeze {
                        encoder: true,
                        regular: true,
                        private: false,
                    },
                )
            };
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("minibatch loss {loss}")));
            }
            let g = loss_gradients(&self.net, &trace, &targets, kind, freeze)?;
            if regular {
                nesterov_step(&mut self.net.encoder, &g.encoder, &mut self.optim.encoder)?;
                nesterov_step(&mut self.net.regular, &g.regular, &mut self.optim.regular)?;
            } else {
                nesterov_step(&mut self.net.private, &g.private, &mut self.optim.private)?;
            }
            self.updates += 1;
            total += loss;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    /// Branch block then encoder block, each of `N` sampled examples per pass.
    fn toggle_round(&mut self, train: &Dataset, p_hat_z: &EmpiricalDistribution) -> Result<f64> {
        let n = self.config.block_for(train.len())?;
        let dropout = self.dropout();
        let idx = self.sampler.draw(n * self.config.branch_passes, &mut self.rng);
        for chunk in idx.chunks(self.config.batch_size) {
            let b = gather(train, chunk);
            let targets = Targets {
                y: &b.y,
                z: &b.z,
                p_hat_z,
            };
            let trace = self.net.forward(&b.x, &dropout, Mode::Train, &mut self.rng)?;
            let losses = batch_losses(&trace, &targets, self.config.lambda)?;
            if !losses.is_finite() {
                return Err(Error::Numeric(format!("branch block losses {losses:?}")));
            }
            let (gr, gp) = branch_gradients(&self.net, &trace, &targets)?;
            nesterov_step(&mut self.net.regular, &gr, &mut self.optim.regular)?;
            nesterov_step(&mut self.net.private, &gp, &mut self.optim.private)?;
            self.updates += 1;
        }
        let idx = self.sampler.draw(n * self.config.encoder_passes, &mut self.rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in idx.chunks(self.config.batch_size) {
            let b = gather(train, chunk);
            let targets = Targets {
                y: &b.y,
                z: &b.z,
                p_hat_z,
            };
            let trace = self.net.forward(&b.x, &dropout, Mode::Train, &mut self.rng)?;
            let losses = batch_losses(&trace, &targets, self.config.lambda)?;
            if !losses.is_finite() {
                return Err(Error::Numeric(format!("encoder block losses {losses:?}")));
            }
            let g = encoder_gradient(&self.net, &trace, &targets, self.config.lambda, losses.sign())?;
            nesterov_step(&mut self.net.encoder, &g, &mut self.optim.encoder)?;
            self.updates += 1;
            total += losses.encoder_objective;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    /// One block of `N` examples, every minibatch updating all three stacks.
    fn simultaneous_round(&mut self, train: &Dataset, p_hat_z: &EmpiricalDistribution) -> Result<f64> {
        let n = self.config.block_for(train.len())?;
        let dropout = self.dropout();
        let idx = self.sampler.draw(n, &mut self.rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in idx.chunks(self.config.batch_size) {
            let b = gather(train, chunk);
            let targets = Targets {
                y: &b.y,
                z: &b.z,
                p_hat_z,
            };
            let trace = self.net.forward(&b.x, &dropout, Mode::Train, &mut self.rng)?;
            let losses = batch_losses(&trace, &targets, self.config.lambda)?;
            if !losses.is_finite() {
                return Err(Error::Numeric(format!("minibatch losses {losses:?}")));
            }
            let g = simultaneous_gradients(&self.net, &trace, &targets, self.config.lambda, losses.sign())?;
            nesterov_step(&mut self.net.encoder, &g.encoder, &mut self.optim.encoder)?;
            nesterov_step(&mut self.net.regular, &g.regular, &mut self.optim.regular)?;
            nesterov_step(&mut self.net.private, &g.private, &mut self.optim.private)?;
            self.updates += 1;
            total += losses.encoder_objective;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    fn count(&self, stage: Stage) -> usize {
        self.history.iter().filter(|u| u.stage == stage).count()
    }

    /// Held-out summary of the current network.
    pub fn report(&self, data: Data<'_>) -> Result<TrainReport> {
        let p_hat_train = data.train.p_hat_z()?;
        let lambda = self.config.lambda;
        let test_out = self.net.predict(&data.test.x)?;
        let p_hat_test = data.test.p_hat_z()?;
        let test_report = build_report(
            &test_out.regular,
            &test_out.private,
            &data.test.y,
            &data.test.z,
            &p_hat_test,
            None,
        )?;
        let test = evaluate(&self.net, data.test, &p_hat_train, lambda)?;
        let k = self.shape.n_private;
        let attacker_ce = self.attacker.as_ref().map(|a| a.test_cross_entropy);
        let bounds = BoundEstimates {
            attacker: attacker_ce.map(|l| private_error_lower_bound(l, k)).transpose()?,
            branch: private_error_lower_bound(test.l_p, k)?,
            entropy_variant: private_error_lower_bound_entropy_variant(attacker_ce.unwrap_or(test.l_p), &p_hat_test)?,
            regular_upper: misclassification_upper_bound(test.l_r)?,
        };
        Ok(TrainReport {
            lambda,
            seed: self.config.seed,
            schedule: self.config.schedule,
            updates: self.updates,
            stages: StageCounts {
                pretrain_regular: self.count(Stage::PretrainRegular),
                pretrain_private: self.count(Stage::PretrainPrivate),
                adversarial: self.count(Stage::Adversarial),
            },
            train: evaluate(&self.net, data.train, &p_hat_train, lambda)?,
            val: evaluate(&self.net, data.val, &p_hat_train, lambda)?,
            test,
            test_report,
            attacker: self.attacker.clone(),
            bounds,
            history: self.history.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let session: Session = serde_json::from_str(s)?;
        if session.format != CHECKPOINT_FORMAT {
            return Err(Error::State(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_FORMAT})",
                session.format
            )));
        }
        session.net.validate()?;
        Ok(session)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn config_error(problems: Vec<String>) -> Error {
    config(problems.join("; "))
}

/// Runs a session to completion and returns it with its report.
pub fn train_full(config: TrainConfig, data: Data<'_>) -> Result<(Session, TrainReport)> {
    let mut s = Session::new(config, data)?;
    s.run(data, None)?;
    let r = s.report(data)?;
    Ok((s, r))
}
