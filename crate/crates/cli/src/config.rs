//! Flat TOML run configuration.
//!
//! ```toml
//! source = "synth"          # or "csv"
//! seeds = [0, 1, 2, 3, 4]
//! mode = "relaxed"
//! learning_rate = 1e-2
//! ```
//!
//! Every key is optional. Relative paths are resolved against the directory of
//! the configuration file. Command-line flags override the file.

use crate::error::{CliError, CliResult};
use hsumm::cohort::{ingest_csv, IngestOptions, RawCohort};
use hsumm::synth::{generate, GroundTruth, SynthSpec};
use hsumm::{FeatureMode, TrainConfig};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Generate a synthetic cohort from the `n_*`/`synth_*` keys.
    #[default]
    Synth,
    /// Read `timeseries`, `statics` and `labels` CSV files.
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub source: Source,
    pub out: Option<PathBuf>,

    // CSV cohort.
    pub timeseries: Option<PathBuf>,
    pub statics: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Expected variable names (order fixes the design layout).
    pub variables: Option<Vec<String>>,
    /// Static columns to one-hot encode.
    pub categorical: Vec<String>,

    /// Hours per series (both sources).
    pub hours: usize,

    // Synthetic cohort.
    pub n_patients: usize,
    pub n_variables: usize,
    pub n_static: usize,
    pub prevalence: f64,
    pub trend_window: usize,
    pub threshold_window: usize,
    /// Zero every planted label weight.
    pub null_signal: bool,
    pub synth_seed: u64,

    // Splits and seeds.
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
    pub validation_fraction: f64,

    // Training.
    pub mode: FeatureMode,
    pub learning_rate: f64,
    pub summary_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub eval_interval: usize,
    pub patience: usize,
    pub alpha: f64,
    pub shrinkage: f64,
    pub temperature: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthSpec::default();
        let train = TrainConfig::default();
        RunConfig {
            source: Source::Synth,
            out: None,
            timeseries: None,
            statics: None,
            labels: None,
            variables: None,
            categorical: Vec::new(),
            hours: synth.hours,
            n_patients: synth.n_patients,
            n_variables: synth.n_variables,
            n_static: synth.n_static,
            prevalence: synth.prevalence,
            trend_window: synth.trend.window,
            threshold_window: synth.threshold.window,
            null_signal: false,
            synth_seed: synth.seed,
            seeds: vec![0],
            test_fraction: 0.2,
            validation_fraction: train.validation_fraction,
            mode: train.mode,
            learning_rate: train.learning_rate,
            summary_learning_rate: train.summary_learning_rate,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            eval_interval: train.eval_interval,
            patience: train.patience,
            alpha: train.alpha,
            shrinkage: train.shrinkage,
            temperature: train.temperature,
        }
    }
}

/// Values given on the command line; `None` keeps the file's value. `seed`
/// replaces the training seed list (the synth command reads it separately as
/// the cohort seed).
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub mode: Option<FeatureMode>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("configuration: {e}")))?;
        for path in [&mut cfg.timeseries, &mut cfg.statics, &mut cfg.labels, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(seeds) = &o.seeds {
            self.seeds = seeds.clone();
        }
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(mode) = o.mode {
            self.mode = mode;
        }
        if let Some(epochs) = o.epochs {
            self.max_epochs = epochs;
        }
        if let Some(lr) = o.learning_rate {
            self.learning_rate = lr;
        }
    }

    /// Exactly one data source and sane split settings.
    pub fn validate(&self) -> CliResult<()> {
        let csv_keys = [&self.timeseries, &self.statics, &self.labels];
        match self.source {
            Source::Csv if self.timeseries.is_none() || self.labels.is_none() => {
                return Err(CliError::Usage(
                    "source = \"csv\" needs `timeseries` and `labels` paths".into(),
                ))
            }
            Source::Synth if csv_keys.iter().any(|p| p.is_some()) => {
                return Err(CliError::Usage(
                    "source = \"synth\" takes no CSV paths; set source = \"csv\" to read files".into(),
                ))
            }
            _ => {}
        }
        if self.seeds.is_empty() {
            return Err(CliError::Usage("`seeds` is empty".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::Usage(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        self.train_config(self.seeds[0])
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("no output directory: pass --out or set `out`".into()))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            summary_learning_rate: self.summary_learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            eval_interval: self.eval_interval,
            patience: self.patience,
            alpha: self.alpha,
            shrinkage: self.shrinkage,
            temperature: self.temperature,
            mode: self.mode,
            seed,
            validation_fraction: self.validation_fraction,
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        let base = SynthSpec::default();
        let spec = SynthSpec {
            n_patients: self.n_patients,
            n_variables: self.n_variables,
            hours: self.hours,
            n_static: self.n_static,
            prevalence: self.prevalence,
            trend: hsumm::synth::TrendSignal {
                window: self.trend_window,
                ..base.trend
            },
            threshold: hsumm::synth::ThresholdSignal {
                window: self.threshold_window,
                ..base.threshold
            },
            seed: self.synth_seed,
            ..base
        };
        if self.null_signal {
            spec.null_signal()
        } else {
            spec
        }
    }

    /// The configured cohort in raw units, with the ground truth for synthetic data.
    pub fn load_cohort(&self) -> CliResult<(RawCohort, Option<GroundTruth>)> {
        match self.source {
            Source::Synth => {
                let g = generate(&self.synth_spec())?;
                Ok((g.cohort, Some(g.truth)))
            }
            Source::Csv => {
                let options = IngestOptions {
                    hours: self.hours,
                    variables: self.variables.clone(),
                    categorical: self.categorical.clone(),
                };
                let missing = || CliError::Usage("CSV source without paths".into());
                let cohort = ingest_csv(
                    self.timeseries.as_deref().ok_or_else(missing)?,
                    self.statics.as_deref(),
                    self.labels.as_deref().ok_or_else(missing)?,
                    &options,
                )?;
                Ok((cohort, None))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_training_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(
            cfg.train_config(3),
            TrainConfig {
                seed: 3,
                ..TrainConfig::default()
            }
        );
        assert_eq!(cfg.synth_spec(), SynthSpec::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn parses_flat_file_and_resolves_paths() {
        let text = r#"
            source = "csv"
            timeseries = "data/ts.csv"
            labels = "/abs/labels.csv"
            seeds = [1, 2]
            mode = "time_of_prediction_only"
            alpha = 0.01
        "#;
        let cfg = RunConfig::from_toml(text, Path::new("/runs")).unwrap();
        assert_eq!(cfg.timeseries.as_deref(), Some(Path::new("/runs/data/ts.csv")));
        assert_eq!(cfg.labels.as_deref(), Some(Path::new("/abs/labels.csv")));
        assert_eq!(cfg.mode, FeatureMode::TimeOfPredictionOnly);
        assert_eq!(cfg.train_config(2).alpha, 0.01);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_mixed_sources_are_usage_errors() {
        assert!(matches!(
            RunConfig::from_toml("lr = 1", Path::new(".")),
            Err(CliError::Usage(_))
        ));
        let cfg = RunConfig::from_toml("timeseries = \"x.csv\"", Path::new(".")).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
        let cfg = RunConfig::from_toml("source = \"csv\"", Path::new(".")).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }

    #[test]
    fn flags_win_over_file() {
        let mut cfg = RunConfig::from_toml("seeds = [4, 5]\nmax_epochs = 10", Path::new(".")).unwrap();
        cfg.apply(&Overrides {
            epochs: Some(3),
            mode: Some(FeatureMode::Hard),
            ..Default::default()
        });
        assert_eq!(
            (cfg.max_epochs, cfg.mode, cfg.seeds.clone()),
            (3, FeatureMode::Hard, vec![4, 5])
        );
        cfg.apply(&Overrides {
            seed: Some(9),
            ..Default::default()
        });
        assert_eq!((cfg.seeds, cfg.synth_seed), (vec![9], 0));
    }
}
