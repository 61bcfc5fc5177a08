//! Declarative run configuration: a TOML file with every field defaulted,
//! then `section.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use anonrep::data::SynthSpec;
use anonrep::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ANONREP_OUT";
pub const DEFAULT_OUT: &str = "anonrep-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// UNIPEN-style pen trajectories, one file or a directory of files.
    Pendigits,
    Synth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepConfig {
    pub source: Source,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Train, validation and test sizes.
    pub sizes: [usize; 3],
    pub seed: u64,
    pub synth: SynthSpec,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            source: Source::Pendigits,
            input: None,
            sizes: [5494, 1000, 1000],
            seed: 0,
            synth: SynthSpec::default(),
        }
    }
}

/// Where the canonical split files live.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory holding `train.txt`, `val.txt` and `test.txt`; defaults to
    /// the `prep` directory under the output root.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.0, 0.25, 0.5, 1.0, 1.5],
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub seed: u64,
    pub models: usize,
    pub max_alphabet: usize,
    pub hamming_distortion: f64,
    pub g_classes: Vec<usize>,
    pub g_points: usize,
    pub prediction_sets: usize,
    pub gradient_nets: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            models: 100,
            max_alphabet: 6,
            hamming_distortion: 0.11,
            g_classes: vec![2, 10, 30],
            g_points: 1000,
            prediction_sets: 1000,
            gradient_nets: 20,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Output directory; defaults to `$ANONREP_OUT/<command>`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub prep: PrepConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub bounds: BoundsConfig,
}

impl Config {
    /// Parses a TOML document and applies `overrides` (`a.b.c=value`, the
    /// value read as TOML and otherwise taken as a bare string).
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is representable as TOML")
    }

    /// Every violated constraint of the sections `command` reads.
    pub fn problems(&self, command: &str) -> Vec<String> {
        let mut out = Vec::new();
        match command {
            "prep" => {
                if self.prep.source == Source::Pendigits && self.prep.input.is_none() {
                    out.push("prep.input is required for source = \"pendigits\"".into());
                }
                if self.prep.source == Source::Synth {
                    if let Err(e) = self.prep.synth.validate() {
                        out.push(e.to_string());
                    }
                }
                if self.prep.sizes[0] == 0 {
                    out.push("prep.sizes: the training split must be non-empty".into());
                }
            }
            "train" | "sweep" | "attack" | "report" => {
                out.extend(self.train.problems());
                if command == "sweep" {
                    if self.sweep.lambdas.is_empty() {
                        out.push("sweep.lambdas is empty".into());
                    }
                    if let Some(l) = self.sweep.lambdas.iter().find(|l| !l.is_finite() || **l < 0.0) {
                        out.push(format!("sweep.lambdas entries must be finite and ≥ 0, got {l}"));
                    }
                    if self.sweep.workers == 0 {
                        out.push("sweep.workers must be ≥ 1".into());
                    }
                }
            }
            "bounds" => {
                let b = &self.bounds;
                if b.max_alphabet < 2 {
                    out.push("bounds.max_alphabet must be ≥ 2".into());
                }
                if !(b.hamming_distortion > 0.0 && b.hamming_distortion < 0.5) {
                    out.push(format!(
                        "bounds.hamming_distortion must lie in (0, 1/2), got {}",
                        b.hamming_distortion
                    ));
                }
                if b.g_points < 2 {
                    out.push("bounds.g_points must be ≥ 2".into());
                }
                if b.g_classes.iter().any(|&k| k < 2) {
                    out.push("bounds.g_classes entries must be ≥ 2".into());
                }
            }
            _ => {}
        }
        out
    }

    pub fn validate(&self, command: &str) -> Result<()> {
        let p = self.problems(command);
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(p.join("; ")))
        }
    }

    /// `output`, else `<output root>/<command>`.
    pub fn output_dir(&self, command: &str) -> PathBuf {
        self.output.clone().unwrap_or_else(|| output_root().join(command))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data.dir.clone().unwrap_or_else(|| output_root().join("prep"))
    }

    pub fn split_paths(&self) -> [PathBuf; 3] {
        let dir = self.data_dir();
        crate::SPLIT_FILES.map(|f| dir.join(f))
    }
}

/// `$ANONREP_OUT`, else `./anonrep-out`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override `{spec}` has an empty key segment")));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = path.split_last().expect("split yields one segment");
    let mut t = table;
    for p in parents {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{spec}`: `{p}` is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anonrep::trainer::Schedule;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = Config::default();
        let back = Config::from_toml(&c.to_toml(), &[]).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn overrides_replace_file_values() {
        let text = "[train]\nlambda = 0.5\nschedule = \"toggle\"\n";
        let c = Config::from_toml(
            text,
            &[
                "train.lambda=1.25".into(),
                "train.schedule=simultaneous".into(),
                "sweep.lambdas=[0, 2]".into(),
                "data.dir=/tmp/x".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.train.lambda, 1.25);
        assert_eq!(c.train.schedule, Schedule::Simultaneous);
        assert_eq!(c.sweep.lambdas, vec![0.0, 2.0]);
        assert_eq!(c.data.dir.as_deref(), Some(Path::new("/tmp/x")));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(
            Config::from_toml("[train]\nlamda = 1\n", &[]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            Config::from_toml("", &["train.lambda".into()]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            Config::from_toml("", &["train.lambda=fast".into()]),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn problems_are_enumerated_together() {
        let mut c = Config::default();
        c.train.lambda = -1.0;
        c.train.batch_size = 0;
        c.sweep.lambdas.clear();
        let p = c.problems("sweep");
        assert_eq!(p.len(), 3, "{p:?}");
        assert_eq!(Config::default().problems("prep").len(), 1);
    }
}
