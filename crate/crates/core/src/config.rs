//! Run configuration: one JSON object per invocation, unknown keys
//! rejected. Fields a command does not use are ignored by it.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::generator::TrainConfig;
use crate::od::Detector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Train,
    Sample,
    TestMyopicity,
    OdBench,
    SynthLens,
    Scalability,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Sample => "sample",
            Command::TestMyopicity => "test-myopicity",
            Command::OdBench => "od-bench",
            Command::SynthLens => "synth-lens",
            Command::Scalability => "scalability",
        }
    }
}

impl FromStr for Command {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .or_else(|_| input(format!("unknown command {s:?}")))
    }
}

/// Where the outlier ensemble's subspaces come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OdMethod {
    /// Lens sampled from a generator trained on the inliers.
    #[default]
    Vgan,
    /// Feature bagging.
    Fb,
    /// The full feature space only.
    Full,
}

impl OdMethod {
    pub fn name(self) -> &'static str {
        match self {
            OdMethod::Vgan => "vgan",
            OdMethod::Fb => "fb",
            OdMethod::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must agree with the command given on the command line.
    pub command: Option<Command>,
    pub dataset_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub lens_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    /// Defaults to the output path with a `.loss.csv` extension.
    pub loss_history_path: Option<PathBuf>,
    /// `train.seed` is the run seed; repetition `r` uses `seed + r`.
    pub train: TrainConfig,
    pub detector: Detector,
    /// Neighborhood size; the detector's default when absent.
    pub k: Option<usize>,
    pub alpha: f64,
    pub num_permutations: usize,
    pub repetitions: usize,
    pub lens_samples: usize,
    pub method: OdMethod,
    pub fb_subspaces: usize,
    pub train_ratio: f64,
    /// Row cap for bandwidth estimation.
    pub bandwidth_rows: usize,
    /// Row cap for the myopicity test, which pools two copies of the data.
    pub myopicity_rows: usize,
    pub f_values: Vec<f64>,
    pub population_size: usize,
    pub d_values: Vec<usize>,
    pub scalability_rows: usize,
    pub budget_seconds: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            dataset_path: None,
            model_path: None,
            lens_path: None,
            output_path: None,
            loss_history_path: None,
            train: TrainConfig::default(),
            detector: Detector::Lof,
            k: None,
            alpha: 0.10,
            num_permutations: 200,
            repetitions: 10,
            lens_samples: 500,
            method: OdMethod::Vgan,
            fb_subspaces: 50,
            train_ratio: 0.8,
            bandwidth_rows: 2000,
            myopicity_rows: 2000,
            f_values: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            population_size: 10_000,
            d_values: vec![100, 250, 500, 1000],
            scalability_rows: 1000,
            budget_seconds: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or_else(|| self.detector.default_k())
    }

    pub fn loss_history_path(&self) -> Option<PathBuf> {
        self.loss_history_path
            .clone()
            .or_else(|| self.output_path.as_ref().map(|p| p.with_extension("loss.csv")))
    }

    fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str, command: Command) -> Result<&'a PathBuf> {
        field
            .as_ref()
            .ok_or_else(|| crate::error::Error::Input(format!("{} needs {name}", command.name())))
    }

    /// Checks the fields `command` depends on.
    pub fn validate(&self, command: Command) -> Result<()> {
        if let Some(c) = self.command {
            if c != command {
                return input(format!(
                    "config is for {}, but {} was requested",
                    c.name(),
                    command.name()
                ));
            }
        }
        self.train.validate()?;
        let alpha_ok = self.alpha > 0.0 && self.alpha < 1.0;
        match command {
            Command::Train => {
                self.require(&self.dataset_path, "dataset_path", command)?;
                self.require(&self.output_path, "output_path", command)?;
            }
            Command::Sample => {
                self.require(&self.model_path, "model_path", command)?;
                self.require(&self.output_path, "output_path", command)?;
                if self.lens_samples == 0 {
                    return input("lens_samples must be positive");
                }
            }
            Command::TestMyopicity => {
                self.require(&self.dataset_path, "dataset_path", command)?;
                if self.model_path.is_some() == self.lens_path.is_some() {
                    return input("test-myopicity needs exactly one of model_path and lens_path");
                }
                if !alpha_ok || self.num_permutations == 0 || self.myopicity_rows < 2 {
                    return input("test-myopicity needs alpha in (0, 1), num_permutations ≥ 1 and myopicity_rows ≥ 2");
                }
            }
            Command::OdBench => {
                self.require(&self.dataset_path, "dataset_path", command)?;
                if self.repetitions == 0 || self.k() == 0 || self.fb_subspaces == 0 || self.lens_samples == 0 {
                    return input("od-bench needs positive repetitions, k, fb_subspaces and lens_samples");
                }
                if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
                    return input("train_ratio must lie in (0, 1)");
                }
                if self.method == OdMethod::Vgan && (!alpha_ok || self.num_permutations == 0) {
                    return input("od-bench with vgan needs alpha in (0, 1) and num_permutations ≥ 1");
                }
            }
            Command::SynthLens => {
                if self.f_values.is_empty() || self.f_values.iter().any(|f| !(0.0..=1.0).contains(f)) {
                    return input("f_values must be a nonempty list in [0, 1]");
                }
                if self.repetitions == 0 || self.population_size < 2 || self.lens_samples == 0 {
                    return input("synth-lens needs positive repetitions and lens_samples, population_size ≥ 2");
                }
            }
            Command::Scalability => {
                if self.d_values.is_empty() || self.d_values.iter().any(|&d| d < 2) {
                    return input("d_values must be a nonempty list of widths ≥ 2");
                }
                if self.scalability_rows < 2 {
                    return input("scalability_rows must be at least 2");
                }
            }
        }
        if let Some(b) = self.budget_seconds {
            if !(b > 0.0) {
                return input("budget_seconds must be positive");
            }
        }
        if self.bandwidth_rows < 2 {
            return input("bandwidth_rows must be at least 2");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_configs() {
        let c: RunConfig = serde_json::from_str(
            r#"{"command": "od-bench", "dataset_path": "d.csv", "detector": "knn", "train": {"epochs": 3}}"#,
        )
        .unwrap();
        assert_eq!(c.command, Some(Command::OdBench));
        assert_eq!(c.k(), 5);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 500);
        c.validate(Command::OdBench).unwrap();
        assert!(c.validate(Command::Train).is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"epochs": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"epoch": 3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"command": "fit"}"#).is_err());
    }

    #[test]
    fn per_command_requirements() {
        let base = RunConfig::default();
        assert!(base.validate(Command::SynthLens).is_ok());
        assert!(base.validate(Command::Scalability).is_ok());
        assert!(base.validate(Command::Sample).is_err());
        let c = RunConfig {
            dataset_path: Some("x.csv".into()),
            model_path: Some("m.json".into()),
            lens_path: Some("l.csv".into()),
            ..RunConfig::default()
        };
        assert!(c.validate(Command::TestMyopicity).is_err());
        let c = RunConfig {
            f_values: vec![1.5],
            ..RunConfig::default()
        };
        assert!(c.validate(Command::SynthLens).is_err());
        let c = RunConfig {
            train: TrainConfig {
                decay_rho: 1.0,
                ..TrainConfig::default()
            },
            ..RunConfig::default()
        };
        assert!(c.validate(Command::SynthLens).is_err());
    }

    #[test]
    fn command_names_round_trip() {
        for c in [
            Command::Train,
            Command::Sample,
            Command::TestMyopicity,
            Command::OdBench,
            Command::SynthLens,
            Command::Scalability,
        ] {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        let out = RunConfig {
            output_path: Some("run/model.json".into()),
            ..RunConfig::default()
        };
        assert_eq!(out.loss_history_path().unwrap(), PathBuf::from("run/model.loss.csv"));
    }
}
