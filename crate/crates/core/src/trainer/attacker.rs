//! Post-hoc attacker: a fresh private-label classifier trained on frozen
//! representations, measuring how much private information survives.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{input, Error, Result};
use crate::eval::accuracy;
use crate::nn::{nesterov_step, Activation, DropoutSpec, Matrix, Mode, NetStack, OptimizerState};
use crate::objectives::{private_loss, EmpiricalDistribution};
use crate::trainer::config::AttackerConfig;
use crate::trainer::Data;

/// Representations with their private labels.
#[derive(Debug, Clone, Copy)]
pub struct Encoded<'a> {
    pub u: &'a Matrix,
    pub z: &'a [usize],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerReport {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    /// Held-out private cross-entropy of the attacker, nats.
    pub test_cross_entropy: f64,
    /// Accuracy of the best constant guess on the test split.
    pub test_majority_accuracy: f64,
    pub epochs: usize,
}

/// Trains a fresh classifier on `(u, z)` pairs, stopping on a validation
/// plateau and keeping the best-validation parameters.
pub fn train_attacker_on(
    train: Encoded<'_>,
    val: Encoded<'_>,
    test: Encoded<'_>,
    n_private: usize,
    hidden: &[usize],
    cfg: &AttackerConfig,
    seed: u64,
) -> Result<(NetStack, AttackerReport)> {
    if train.u.rows() == 0 || train.u.rows() != train.z.len() {
        return Err(input("attacker needs a non-empty, labelled training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = NetStack::mlp(train.u.cols(), hidden, n_private, Activation::Softmax, &mut rng)?;
    let mut opt = OptimizerState::new(&net, cfg.lr, cfg.momentum)?;
    let dropout = DropoutSpec::new(cfg.dropout, false, true);
    let mut best: Option<(f64, NetStack)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.u.rows()).collect();
    let mut epochs = 0;
    while epochs < cfg.epochs && since_best < cfg.patience.max(1) {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let x = train.u.select_rows(chunk);
            let trace = net.forward(&x, &dropout, Mode::Train, &mut rng)?;
            let n = chunk.len() as f64;
            let mut top = trace.output().clone();
            for (i, &idx) in chunk.iter().enumerate() {
                let v = top.get(i, train.z[idx]);
                top.set(i, train.z[idx], v - 1.0);
            }
            top.scale(1.0 / n);
            let (g, _) = net.backward(&trace, &top)?;
            nesterov_step(&mut net, &g, &mut opt)?;
        }
        epochs += 1;
        let loss = private_loss(&net.predict(val.u)?, val.z)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "attacker validation loss became {loss} at epoch {epochs}"
            )));
        }
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, net.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
    }
    if let Some((_, b)) = best {
        net = b;
    }
    let test_pred = net.predict(test.u)?;
    let majority = EmpiricalDistribution::from_labels(test.z, n_private)?.max_prob();
    let report = AttackerReport {
        train_accuracy: accuracy(&net.predict(train.u)?, train.z)?,
        val_accuracy: accuracy(&net.predict(val.u)?, val.z)?,
        test_accuracy: accuracy(&test_pred, test.z)?,
        test_cross_entropy: private_loss(&test_pred, test.z)?,
        test_majority_accuracy: majority,
        epochs,
    };
    Ok((net, report))
}

/// Encodes every split with the frozen (evaluation-mode) encoder, then
/// trains the attacker on the results.
pub fn train_attacker(
    encoder: &NetStack,
    data: Data<'_>,
    hidden: &[usize],
    cfg: &AttackerConfig,
    seed: u64,
) -> Result<(NetStack, AttackerReport)> {
    let enc = |d: &Dataset| encoder.predict(&d.x);
    let (ut, uv, us) = (enc(data.train)?, enc(data.val)?, enc(data.test)?);
    train_attacker_on(
        Encoded {
            u: &ut,
            z: &data.train.z,
        },
        Encoded { u: &uv, z: &data.val.z },
        Encoded {
            u: &us,
            z: &data.test.z,
        },
        data.train.n_private,
        hidden,
        cfg,
        seed,
    )
}
