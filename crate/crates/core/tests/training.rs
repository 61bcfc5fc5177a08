use anonrep::data::{split, synth_generate, Splits, SynthSpec};
use anonrep::nn::{DropoutSpec, Mode};
use anonrep::objectives::{encoder_gradient, loss_gradients, Freeze, GapSign, LossKind, Targets};
use anonrep::trainer::{train_full, Architecture, PhaseEpochs, Schedule, Session, Stage, TrainConfig, TriNet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splits(seed: u64) -> Splits {
    let spec = SynthSpec {
        per_pair: 10,
        seed,
        ..SynthSpec::default()
    };
    split(&synth_generate(&spec).unwrap(), (120, 40, 40), seed).unwrap()
}

fn small_config(lambda: f64, schedule: Schedule) -> TrainConfig {
    let mut c = TrainConfig {
        lambda,
        schedule,
        batch_size: 16,
        epochs: PhaseEpochs {
            regular: 4,
            private: 4,
            adversarial: 3,
        },
        architecture: Architecture {
            encoder: vec![12, 8],
            regular: vec![6],
            private: vec![6],
        },
        ..TrainConfig::default()
    };
    c.attacker.epochs = 5;
    c
}

fn flat(n: &anonrep::nn::NetStack) -> Vec<f64> {
    n.to_flat()
}

#[test]
fn private_pretraining_freezes_encoder_and_regular_branch() {
    let s = splits(1);
    let mut cfg = small_config(1.0, Schedule::Toggle);
    cfg.patience = 100;
    let mut sess = Session::new(cfg, (&s).into()).unwrap();
    // four regular epochs, the stage switch, then one private epoch
    assert!(!sess.run((&s).into(), Some(5)).unwrap());
    assert_eq!(sess.stage, Stage::PretrainPrivate);
    let before = sess.net.clone();
    assert!(!sess.run((&s).into(), Some(1)).unwrap());
    assert_eq!(flat(&before.encoder), flat(&sess.net.encoder));
    assert_eq!(flat(&before.regular), flat(&sess.net.regular));
    assert_ne!(flat(&before.private), flat(&sess.net.private));
}

#[test]
fn attacker_fit_leaves_the_network_untouched() {
    let s = splits(2);
    let mut sess = Session::new(small_config(0.5, Schedule::Toggle), (&s).into()).unwrap();
    while sess.stage != Stage::Attacker {
        sess.run((&s).into(), Some(1)).unwrap();
    }
    let before = sess.net.clone();
    assert!(sess.run((&s).into(), None).unwrap());
    assert_eq!(before, sess.net);
    assert!(sess.attacker.is_some());
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let s = splits(3);
    let mut cfg = small_config(1.0, Schedule::Toggle);
    cfg.epochs = PhaseEpochs {
        regular: 0,
        private: 0,
        adversarial: 0,
    };
    let fresh = Session::new(cfg.clone(), (&s).into()).unwrap().net;
    let (sess, report) = train_full(cfg, (&s).into()).unwrap();
    assert_eq!(fresh, sess.net);
    assert_eq!(report.updates, 0);
    assert!(report.history.is_empty());
}

#[test]
fn zero_lambda_encoder_gradient_is_the_regular_gradient() {
    let s = splits(4);
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let net = TriNet::new(
        s.train.dim(),
        &small_config(0.0, Schedule::Toggle).architecture,
        4,
        5,
        &mut r,
    )
    .unwrap();
    let p_hat = s.train.p_hat_z().unwrap();
    let targets = Targets {
        y: &s.train.y,
        z: &s.train.z,
        p_hat_z: &p_hat,
    };
    let trace = net
        .forward(&s.train.x, &DropoutSpec::new(0.1, true, true), Mode::Train, &mut r)
        .unwrap();
    let plain = loss_gradients(&net, &trace, &targets, LossKind::Regular, Freeze::BRANCHES).unwrap();
    for sign in [GapSign::Negative, GapSign::Zero, GapSign::Positive] {
        let g = encoder_gradient(&net, &trace, &targets, 0.0, sign).unwrap();
        assert_eq!(g.to_flat(), plain.encoder.to_flat());
    }
}

#[test]
fn resumed_run_is_bit_identical_to_an_uninterrupted_one() {
    let s = splits(5);
    for schedule in [Schedule::Toggle, Schedule::Simultaneous] {
        let cfg = small_config(1.0, schedule);
        let (whole, whole_report) = train_full(cfg.clone(), (&s).into()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let mut sess = Session::new(cfg, (&s).into()).unwrap();
        sess.save(&path).unwrap();
        loop {
            let mut resumed = Session::load(&path).unwrap();
            let done = resumed.run((&s).into(), Some(2)).unwrap();
            resumed.save(&path).unwrap();
            if done {
                sess = resumed;
                break;
            }
        }
        assert_eq!(whole.to_json().unwrap(), sess.to_json().unwrap());
        assert_eq!(whole_report, sess.report((&s).into()).unwrap());
    }
}

#[test]
fn identical_configs_train_identically() {
    let s = splits(6);
    let cfg = small_config(0.7, Schedule::Toggle);
    let (a, ra) = train_full(cfg.clone(), (&s).into()).unwrap();
    let (b, rb) = train_full(cfg, (&s).into()).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
}

/// Toggle rounds spend separate minibatches on the branches and on the
/// encoder; simultaneous rounds use each minibatch once for all three.
#[test]
fn toggle_rounds_use_separate_minibatches_per_side() {
    let s = splits(7);
    for (schedule, per_round) in [
        (Schedule::Toggle, 2 * 120usize.div_ceil(16)),
        (Schedule::Simultaneous, 120usize.div_ceil(16)),
    ] {
        let mut cfg = small_config(1.0, schedule);
        cfg.patience = 100;
        let mut sess = Session::new(cfg, (&s).into()).unwrap();
        while sess.stage != Stage::Adversarial {
            sess.run((&s).into(), Some(1)).unwrap();
        }
        let (before, net) = (sess.updates, sess.net.clone());
        sess.run((&s).into(), Some(1)).unwrap();
        assert_eq!(sess.updates - before, per_round, "{schedule:?}");
        assert_ne!(flat(&net.encoder), flat(&sess.net.encoder));
        assert_ne!(flat(&net.private), flat(&sess.net.private));
    }
}

#[test]
fn checkpoint_rejects_other_data() {
    let s = splits(8);
    let mut sess = Session::new(small_config(1.0, Schedule::Toggle), (&s).into()).unwrap();
    let other = split(
        &synth_generate(&SynthSpec {
            dim: 9,
            per_pair: 10,
            ..SynthSpec::default()
        })
        .unwrap(),
        (120, 40, 40),
        0,
    )
    .unwrap();
    assert!(sess.run((&other).into(), Some(1)).is_err());
}

#[test]
fn attacker_does_at_least_as_well_as_the_majority_guess() {
    let s = splits(9);
    let (_, r) = train_full(small_config(0.0, Schedule::Toggle), (&s).into()).unwrap();
    let a = r.attacker.unwrap();
    assert!(a.test_accuracy >= a.test_majority_accuracy - 0.02, "{a:?}");
}
