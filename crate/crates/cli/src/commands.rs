//! The six batch commands. Each validates its config before doing any work
//! and writes its artifacts, `manifest.json` last, into one output directory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anonrep::data::{read_unipen, split, synth_generate, trajectories_to_dataset, Dataset, PenTrajectory};
use anonrep::eval::{build_report, EvalReport};
use anonrep::infotheory::BetaGrid;
use anonrep::trainer::{lambda_sweep, train_attacker, AttackerReport, Data, Session, SweepRecord, TrainReport};
use anonrep::validation::{
    g_check, gradient_suite, hamming_check, lower_bound_suite, upper_bound_suite, GCheck, GradientCase, HammingCheck,
    LowerBoundCase, UpperBoundCase,
};
use serde::{Deserialize, Serialize};

use crate::config::{Config, Source};
use crate::error::{CliError, Result};
use crate::manifest::{PointTiming, RunManifest};
use crate::SPLIT_FILES;

/// Version stamped on every JSON-lines sweep record.
pub const SWEEP_SCHEMA: u32 = 1;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";
pub const RECORD_FILE: &str = "record.csv";
pub const WRITERS_FILE: &str = "writers.txt";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSONL: &str = "sweep.jsonl";
pub const ATTACK_FILE: &str = "attack.json";
pub const BOUNDS_FILE: &str = "bounds.json";
pub const EVAL_JSON: &str = "eval.json";
pub const EVAL_CSV: &str = "eval.csv";

/// Absolute tolerances of the bound suites.
pub const HAMMING_TOLERANCE: f64 = 1e-4;
pub const G_ENDPOINT_TOLERANCE: f64 = 1e-12;
pub const G_ROUNDTRIP_TOLERANCE: f64 = 1e-8;
pub const RISK_SLACK: f64 = 1e-9;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes to a temporary sibling, then renames it over `path`.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn data_error(path: &Path, e: anonrep::Error) -> CliError {
    match CliError::from(e) {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    }
}

struct LoadedSplits {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

impl LoadedSplits {
    fn data(&self) -> Data<'_> {
        Data {
            train: &self.train,
            val: &self.val,
            test: &self.test,
        }
    }
}

fn load_splits(cfg: &Config, manifest: &mut RunManifest) -> Result<LoadedSplits> {
    let [a, b, c] = cfg.split_paths().map(|p| {
        let d = Dataset::load(&p).map_err(|e| data_error(&p, e))?;
        manifest.input(&p)?;
        Ok::<_, CliError>(d)
    });
    Ok(LoadedSplits {
        train: a?,
        val: b?,
        test: c?,
    })
}

fn load_checkpoint(path: &Path) -> Result<Session> {
    Session::load(path).map_err(|e| data_error(path, e))
}

fn unipen_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| CliError::io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no input files", input.display())));
    }
    Ok(files)
}

fn read_trajectories(files: &[PathBuf]) -> Result<Vec<PenTrajectory>> {
    let mut out = Vec::new();
    for f in files {
        let reader = BufReader::new(File::open(f).map_err(|e| CliError::io(f, e))?);
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("unknown");
        let parsed = read_unipen(reader, stem).map_err(|e| data_error(f, e))?;
        if parsed.skipped > 0 {
            log::warn!("{}: skipped {} unusable samples", f.display(), parsed.skipped);
        }
        out.extend(parsed.trajectories);
    }
    Ok(out)
}

/// Builds canonical `train.txt`, `val.txt` and `test.txt` from pen
/// trajectories or a synthetic spec.
pub fn cmd_prep(cfg: &Config) -> Result<RunManifest> {
    cfg.validate("prep")?;
    let p = &cfg.prep;
    let out = cfg.output_dir("prep");
    let mut manifest = RunManifest::start("prep", cfg, p.seed);
    let (dataset, writers) = match p.source {
        Source::Synth => (synth_generate(&p.synth)?, None),
        Source::Pendigits => {
            let input = p.input.as_deref().expect("validated");
            let files = unipen_files(input)?;
            for f in &files {
                manifest.input(f)?;
            }
            let trajs = read_trajectories(&files)?;
            let (ds, writers, degenerate) = trajectories_to_dataset(&trajs)?;
            if degenerate > 0 {
                log::warn!("{degenerate} samples had a zero-extent bounding box");
            }
            (ds, Some(writers))
        }
    };
    log::info!(
        "{} samples, |Y| = {}, |Z| = {}",
        dataset.len(),
        dataset.n_regular,
        dataset.n_private
    );
    let [a, b, c] = p.sizes;
    let splits = split(&dataset, (a, b, c), p.seed)?;
    if !splits.train_only_classes.is_empty() {
        log::warn!("private classes {:?} only appear in train", splits.train_only_classes);
    }
    create_dir(&out)?;
    for (name, d) in SPLIT_FILES.iter().zip([&splits.train, &splits.val, &splits.test]) {
        let path = out.join(name);
        write_atomic(&path, d.to_canonical_string().as_bytes())?;
        manifest.output(&path)?;
    }
    if let Some(w) = writers {
        let path = out.join(WRITERS_FILE);
        let text: String = w.iter().enumerate().map(|(i, n)| format!("{i} {n}\n")).collect();
        write_atomic(&path, text.as_bytes())?;
        manifest.output(&path)?;
    }
    manifest.finish(&out)
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Continue from the checkpoint in the output directory.
    pub resume: bool,
    /// Stop after this many epochs, rounds or attacker fits.
    pub max_units: Option<usize>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub session: Session,
    /// Present once the session has run to completion.
    pub report: Option<TrainReport>,
    pub manifest: RunManifest,
}

/// Trains one network and writes its checkpoint, and once finished its
/// report and one-row sweep record.
pub fn cmd_train(cfg: &Config, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate("train")?;
    let out = cfg.output_dir("train");
    let mut manifest = RunManifest::start("train", cfg, cfg.train.seed);
    let splits = load_splits(cfg, &mut manifest)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let mut session = if opts.resume {
        let s = load_checkpoint(&ckpt)?;
        if s.config != cfg.train {
            return Err(CliError::Config(format!(
                "{}: checkpoint was written with a different [train] config",
                ckpt.display()
            )));
        }
        manifest.input(&ckpt)?;
        s
    } else {
        Session::new(cfg.train.clone(), splits.data())?
    };
    let done = session.run(splits.data(), opts.max_units)?;
    create_dir(&out)?;
    write_atomic(&ckpt, session.to_json()?.as_bytes())?;
    manifest.output(&ckpt)?;
    let report = if done {
        let report = session.report(splits.data())?;
        let path = out.join(REPORT_FILE);
        write_atomic(&path, &pretty(&report)?)?;
        manifest.output(&path)?;
        let path = out.join(RECORD_FILE);
        let csv = format!(
            "{}\n{}\n",
            SweepRecord::csv_header(),
            SweepRecord::from_report(&report).csv_row()
        );
        write_atomic(&path, csv.as_bytes())?;
        manifest.output(&path)?;
        Some(report)
    } else {
        log::info!(
            "stopped in stage {} after {} updates",
            session.stage.name(),
            session.updates
        );
        None
    };
    Ok(TrainOutcome {
        session,
        report,
        manifest: manifest.finish(&out)?,
    })
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    schema_version: u32,
    #[serde(flatten)]
    record: &'a SweepRecord,
}

#[derive(Debug)]
pub struct SweepOutcome {
    /// In grid order.
    pub records: Vec<SweepRecord>,
    pub manifest: RunManifest,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.is_ok()).count()
    }
}

struct SweepSink {
    csv: BufWriter<File>,
    jsonl: BufWriter<File>,
}

impl SweepSink {
    fn create(out: &Path) -> Result<Self> {
        let open = |name: &str| {
            let p = out.join(name);
            File::create(&p).map(BufWriter::new).map_err(|e| CliError::io(&p, e))
        };
        let mut s = Self {
            csv: open(SWEEP_CSV)?,
            jsonl: open(SWEEP_JSONL)?,
        };
        writeln!(s.csv, "{}", SweepRecord::csv_header())
            .and_then(|_| s.csv.flush())
            .map_err(|e| CliError::io(out, e))?;
        Ok(s)
    }

    fn push(&mut self, r: &SweepRecord) -> std::io::Result<()> {
        writeln!(self.csv, "{}", r.csv_row())?;
        self.csv.flush()?;
        let line = serde_json::to_string(&JsonRecord {
            schema_version: SWEEP_SCHEMA,
            record: r,
        })?;
        writeln!(self.jsonl, "{line}")?;
        self.jsonl.flush()
    }
}

/// Trains one network per λ, appending each record to `sweep.csv` and
/// `sweep.jsonl` as soon as it finishes.
pub fn cmd_sweep(cfg: &Config) -> Result<SweepOutcome> {
    cfg.validate("sweep")?;
    let out = cfg.output_dir("sweep");
    let mut manifest = RunManifest::start("sweep", cfg, cfg.train.seed);
    let splits = load_splits(cfg, &mut manifest)?;
    create_dir(&out)?;
    let mut sink = SweepSink::create(&out)?;
    let mut write_error = None;
    let mut timings = Vec::new();
    let records = lambda_sweep(splits.data(), &cfg.train, &cfg.sweep.lambdas, cfg.sweep.workers, |p| {
        log::info!(
            "λ = {}: attacker accuracy {:.4}, regular accuracy {:.4} ({:.1} s)",
            p.record.lambda,
            p.record.attacker_accuracy_test,
            p.record.regular_accuracy_test,
            p.wall_time_s
        );
        timings.push(PointTiming {
            lambda: p.record.lambda,
            wall_time_s: p.wall_time_s,
            ok: p.record.is_ok(),
        });
        if write_error.is_none() {
            write_error = sink.push(&p.record).err();
        }
    })?;
    drop(sink);
    if let Some(e) = write_error {
        return Err(CliError::io(&out, e));
    }
    manifest.timings = timings;
    for name in [SWEEP_CSV, SWEEP_JSONL] {
        manifest.output(&out.join(name))?;
    }
    Ok(SweepOutcome {
        records,
        manifest: manifest.finish(&out)?,
    })
}

/// Retrains a fresh attacker on the frozen encoder of a checkpoint.
pub fn cmd_attack(cfg: &Config, checkpoint: &Path) -> Result<AttackerReport> {
    cfg.validate("attack")?;
    let out = cfg.output_dir("attack");
    let mut manifest = RunManifest::start("attack", cfg, cfg.train.seed);
    let splits = load_splits(cfg, &mut manifest)?;
    let session = load_checkpoint(checkpoint)?;
    manifest.input(checkpoint)?;
    check_geometry(&session, &splits.train)?;
    let hidden = cfg.train.attacker.hidden_for(&session.config.architecture);
    let (_, report) = train_attacker(
        &session.net.encoder,
        splits.data(),
        &hidden,
        &cfg.train.attacker,
        cfg.train.seed,
    )?;
    create_dir(&out)?;
    let path = out.join(ATTACK_FILE);
    write_atomic(&path, &pretty(&report)?)?;
    manifest.output(&path)?;
    manifest.finish(&out)?;
    Ok(report)
}

fn check_geometry(session: &Session, d: &Dataset) -> Result<()> {
    let net = &session.net;
    if net.input_dim() != d.dim() || net.n_regular() != d.n_regular || net.n_private() != d.n_private {
        return Err(CliError::Data(format!(
            "checkpoint expects (dim, |Y|, |Z|) = ({}, {}, {}), data has ({}, {}, {})",
            net.input_dim(),
            net.n_regular(),
            net.n_private(),
            d.dim(),
            d.n_regular,
            d.n_private
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReports {
    pub train: EvalReport,
    pub val: EvalReport,
    pub test: EvalReport,
}

/// Evaluates a checkpoint on every split; each split uses its own `P̂_Z`.
pub fn cmd_report(cfg: &Config, checkpoint: &Path) -> Result<SplitReports> {
    cfg.validate("report")?;
    let out = cfg.output_dir("report");
    let mut manifest = RunManifest::start("report", cfg, cfg.train.seed);
    let splits = load_splits(cfg, &mut manifest)?;
    let session = load_checkpoint(checkpoint)?;
    manifest.input(checkpoint)?;
    check_geometry(&session, &splits.train)?;
    let eval = |d: &Dataset| -> Result<EvalReport> {
        let o = session.net.predict(&d.x)?;
        Ok(build_report(&o.regular, &o.private, &d.y, &d.z, &d.p_hat_z()?, None)?)
    };
    let reports = SplitReports {
        train: eval(&splits.train)?,
        val: eval(&splits.val)?,
        test: eval(&splits.test)?,
    };
    create_dir(&out)?;
    let path = out.join(EVAL_JSON);
    write_atomic(&path, &pretty(&reports)?)?;
    manifest.output(&path)?;
    let mut csv = format!("split,{}\n", EvalReport::CSV_HEADER);
    for (name, r) in [
        ("train", &reports.train),
        ("val", &reports.val),
        ("test", &reports.test),
    ] {
        csv.push_str(&format!("{name},{}\n", r.csv_row()));
    }
    let path = out.join(EVAL_CSV);
    write_atomic(&path, csv.as_bytes())?;
    manifest.output(&path)?;
    manifest.finish(&out)?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub lower_bound: Vec<LowerBoundCase>,
    pub hamming: HammingCheck,
    pub g: Vec<GCheck>,
    pub risk: Vec<UpperBoundCase>,
    pub gradients: Vec<GradientCase>,
    /// One line per failed check; empty when everything holds.
    pub violations: Vec<String>,
}

fn bound_violations(r: &BoundsReport) -> Vec<String> {
    let mut v = Vec::new();
    for c in &r.lower_bound {
        if !c.check.holds {
            v.push(format!(
                "model seed {}: error {} below bound {}",
                c.seed, c.check.error, c.check.bound
            ));
        }
    }
    if r.hamming.error() > HAMMING_TOLERANCE {
        v.push(format!(
            "Hamming rate {} differs from analytic {} by {}",
            r.hamming.rate,
            r.hamming.analytic,
            r.hamming.error()
        ));
    }
    for c in &r.g {
        if c.at_zero > G_ENDPOINT_TOLERANCE || c.at_ceiling > G_ENDPOINT_TOLERANCE {
            v.push(format!(
                "g endpoints off for |Z| = {}: {} and {}",
                c.n_classes, c.at_zero, c.at_ceiling
            ));
        }
        if c.max_roundtrip_error >= G_ROUNDTRIP_TOLERANCE {
            v.push(format!(
                "g roundtrip error {} for |Z| = {}",
                c.max_roundtrip_error, c.n_classes
            ));
        }
        if c.negative_input != 0.0 {
            v.push(format!(
                "g_inverse of a negative input gave {} for |Z| = {}",
                c.negative_input, c.n_classes
            ));
        }
    }
    for (i, c) in r.risk.iter().enumerate() {
        if c.misclassification > c.bound + RISK_SLACK {
            v.push(format!(
                "prediction set {i}: error {} above 1 − exp(−CE) = {}",
                c.misclassification, c.bound
            ));
        }
    }
    for c in &r.gradients {
        if !c.passed() {
            v.push(format!(
                "network seed {}: gradient relative error {}",
                c.seed,
                c.max_rel_error()
            ));
        }
    }
    v
}

/// Runs the bound and gradient validation suites and writes `bounds.json`.
/// Violations are reported, not raised; the caller decides the exit status.
pub fn cmd_bounds(cfg: &Config) -> Result<BoundsReport> {
    cfg.validate("bounds")?;
    let b = &cfg.bounds;
    let out = cfg.output_dir("bounds");
    let mut manifest = RunManifest::start("bounds", cfg, b.seed);
    let numeric = |e: anonrep::Error| CliError::Numeric(e.to_string());
    let lower_bound = lower_bound_suite(b.models, b.seed, b.max_alphabet, &BetaGrid::default()).map_err(numeric)?;
    let hamming = hamming_check(b.hamming_distortion).map_err(numeric)?;
    let g = b
        .g_classes
        .iter()
        .map(|&k| g_check(k, b.g_points))
        .collect::<anonrep::Result<Vec<_>>>()
        .map_err(numeric)?;
    let risk = upper_bound_suite(b.prediction_sets, b.seed).map_err(numeric)?;
    let gradients = gradient_suite(b.gradient_nets, b.seed).map_err(numeric)?;
    let mut report = BoundsReport {
        lower_bound,
        hamming,
        g,
        risk,
        gradients,
        violations: Vec::new(),
    };
    report.violations = bound_violations(&report);
    for v in &report.violations {
        log::error!("{v}");
    }
    create_dir(&out)?;
    let path = out.join(BOUNDS_FILE);
    write_atomic(&path, &pretty(&report)?)?;
    manifest.output(&path)?;
    manifest.finish(&out)?;
    Ok(report)
}
