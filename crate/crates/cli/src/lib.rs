//! Batch front-end for the `anonrep` library. Every command reads one
//! declarative TOML config and writes plot-ready CSV and JSON.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{cmd_attack, cmd_bounds, cmd_prep, cmd_report, cmd_sweep, cmd_train, TrainOptions};
pub use config::Config;
pub use error::{CliError, Result};
pub use manifest::RunManifest;

/// Canonical split file names, in train, validation, test order.
pub const SPLIT_FILES: [&str; 3] = ["train.txt", "val.txt", "test.txt"];

pub const SYNTHETIC_PRESET: &str = include_str!("../configs/synthetic.toml");
pub const PENDIGITS_PRESET: &str = include_str!("../configs/pendigits.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Synthetic,
    Pendigits,
}

impl Preset {
    pub fn text(self) -> &'static str {
        match self {
            Preset::Synthetic => SYNTHETIC_PRESET,
            Preset::Pendigits => PENDIGITS_PRESET,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "anonrep",
    version,
    about = "Adversarial anonymization: prep, train, sweep, attack, bounds, report"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(short, long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in config to start from instead of a file.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Override one config value, e.g. `train.lambda=0.5`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (otherwise `$ANONREP_OUT/<command>`).
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed of the section the command reads.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the effective config as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build canonical train/val/test files.
    Prep {
        /// UNIPEN file or directory of files.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_parser = ["synth", "pendigits"])]
        source: Option<String>,
    },
    /// Train one network through all stages.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_parser = ["toggle", "simultaneous"])]
        schedule: Option<String>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs or rounds; rerun with `--resume`.
        #[arg(long)]
        max_units: Option<usize>,
    },
    /// Train one network per λ and stream the records.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated λ grid.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long, value_parser = ["toggle", "simultaneous"])]
        schedule: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Retrain an attacker on the frozen encoder of a checkpoint.
    Attack {
        #[command(flatten)]
        data: DataArgs,
        /// Defaults to the checkpoint of the `train` output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the bound and gradient validation suites.
    Bounds {
        #[arg(long)]
        models: Option<usize>,
    },
    /// Evaluate a checkpoint on every split.
    Report {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory of canonical split files.
    #[arg(long = "data")]
    pub dir: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prep { .. } => "prep",
            Command::Train { .. } => "train",
            Command::Sweep { .. } => "sweep",
            Command::Attack { .. } => "attack",
            Command::Bounds { .. } => "bounds",
            Command::Report { .. } => "report",
        }
    }

    /// Overrides implied by the command's own flags.
    fn overrides(&self, seed: Option<u64>) -> Vec<String> {
        let mut o = Vec::new();
        let mut set = |k: &str, v: String| o.push(format!("{k}={v}"));
        let quoted = |p: &PathBuf| toml::Value::String(p.display().to_string()).to_string();
        let data = |d: &DataArgs, set: &mut dyn FnMut(&str, String)| {
            if let Some(p) = &d.dir {
                set("data.dir", quoted(p));
            }
        };
        match self {
            Command::Prep { input, source } => {
                if let Some(p) = input {
                    set("prep.input", quoted(p));
                }
                if let Some(s) = source {
                    set("prep.source", format!("\"{s}\""));
                }
                if let Some(s) = seed {
                    set("prep.seed", s.to_string());
                    set("prep.synth.seed", s.to_string());
                }
            }
            Command::Train {
                data: d,
                lambda,
                schedule,
                ..
            } => {
                data(d, &mut set);
                if let Some(l) = lambda {
                    set("train.lambda", format!("{l:?}"));
                }
                if let Some(s) = schedule {
                    set("train.schedule", format!("\"{s}\""));
                }
            }
            Command::Sweep {
                data: d,
                lambdas,
                schedule,
                workers,
            } => {
                data(d, &mut set);
                if let Some(ls) = lambdas {
                    let items: Vec<String> = ls.iter().map(|l| format!("{l:?}")).collect();
                    set("sweep.lambdas", format!("[{}]", items.join(", ")));
                }
                if let Some(s) = schedule {
                    set("train.schedule", format!("\"{s}\""));
                }
                if let Some(w) = workers {
                    set("sweep.workers", w.to_string());
                }
            }
            Command::Attack { data: d, .. } | Command::Report { data: d, .. } => data(d, &mut set),
            Command::Bounds { models } => {
                if let Some(m) = models {
                    set("bounds.models", m.to_string());
                }
                if let Some(s) = seed {
                    set("bounds.seed", s.to_string());
                }
            }
        }
        if let (
            Some(s),
            Command::Train { .. } | Command::Sweep { .. } | Command::Attack { .. } | Command::Report { .. },
        ) = (seed, self)
        {
            o.push(format!("train.seed={s}"));
        }
        o
    }
}

impl Cli {
    /// File or preset, then `--set` values, then the dedicated flags.
    pub fn effective_config(&self) -> Result<Config> {
        let g = &self.global;
        let mut overrides = g.overrides.clone();
        overrides.extend(self.command.overrides(g.seed));
        let mut cfg = match (&g.config, g.preset) {
            (Some(path), _) => Config::load(Some(path), &overrides)?,
            (None, Some(p)) => Config::from_toml(p.text(), &overrides)?,
            (None, None) => Config::from_toml("", &overrides)?,
        };
        if let Some(out) = &g.out {
            cfg.output = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn checkpoint_or_default(checkpoint: &Option<PathBuf>) -> PathBuf {
    checkpoint
        .clone()
        .unwrap_or_else(|| config::output_root().join("train").join(commands::CHECKPOINT_FILE))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| CliError::Data(e.to_string()))?;
    println!("{s}");
    Ok(())
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.effective_config()?;
    if cli.global.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let name = cli.command.name();
    match &cli.command {
        Command::Prep { .. } => {
            let m = cmd_prep(&cfg)?;
            for o in &m.outputs {
                println!("{}  {}", o.sha256, o.path.display());
            }
        }
        Command::Train { resume, max_units, .. } => {
            let opts = TrainOptions {
                resume: *resume,
                max_units: *max_units,
            };
            let t = cmd_train(&cfg, &opts)?;
            match &t.report {
                Some(r) => println!("{}", anonrep::trainer::SweepRecord::from_report(r).csv_row()),
                None => println!(
                    "paused in stage {} after {} updates",
                    t.session.stage.name(),
                    t.session.updates
                ),
            }
        }
        Command::Sweep { .. } => {
            let s = cmd_sweep(&cfg)?;
            println!("{}", anonrep::trainer::SweepRecord::csv_header());
            for r in &s.records {
                println!("{}", r.csv_row());
            }
            let failed = s.failures();
            if failed > 0 {
                return Err(CliError::PartialSweep {
                    failed,
                    total: s.records.len(),
                });
            }
        }
        Command::Attack { checkpoint, .. } => {
            print_json(&cmd_attack(&cfg, &checkpoint_or_default(checkpoint))?)?;
        }
        Command::Report { checkpoint, .. } => {
            print_json(&cmd_report(&cfg, &checkpoint_or_default(checkpoint))?)?;
        }
        Command::Bounds { .. } => {
            let b = cmd_bounds(&cfg)?;
            println!(
                "{} models, {} prediction sets, {} networks: {} violations",
                b.lower_bound.len(),
                b.risk.len(),
                b.gradients.len(),
                b.violations.len()
            );
            if !b.violations.is_empty() {
                return Err(CliError::Violations(b.violations.len()));
            }
        }
    }
    log::info!("{name} finished; outputs in {}", cfg.output_dir(name).display());
    Ok(())
}
