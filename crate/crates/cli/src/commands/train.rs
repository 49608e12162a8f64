use super::{create_dir, write_json, write_text};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use hsumm::pipeline::{mean_and_se, run_seed, RunMetrics};
use hsumm::trainer::FitStatus;
use hsumm::{Checkpoint, FeatureMode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::PathBuf;

/// Contents of `seed_<s>/metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    #[serde(flatten)]
    pub run: RunMetrics,
    pub mode: FeatureMode,
    pub n_features: usize,
    /// `completed`, `early_stopped`, or `aborted: <reason>`.
    pub status: String,
}

/// One metric across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub se: f64,
    /// `"0.8867 ± 0.0061"`.
    pub formatted: String,
}

impl Aggregate {
    fn of(values: &[f64]) -> Self {
        let (mean, se) = mean_and_se(values);
        Aggregate {
            mean,
            se,
            formatted: format!("{mean:.4} ± {se:.4}"),
        }
    }
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mode: FeatureMode,
    pub n_features: usize,
    pub seeds: Vec<u64>,
    pub train_auc: Aggregate,
    pub val_auc: Aggregate,
    pub test_auc: Aggregate,
    pub runs: Vec<SeedMetrics>,
}

fn status_text(status: &FitStatus) -> String {
    match status {
        FitStatus::Completed => "completed".into(),
        FitStatus::EarlyStopped => "early_stopped".into(),
        FitStatus::Aborted(why) => format!("aborted: {why}"),
    }
}

/// Trains one model per seed (each with its own split) and writes
/// `seed_<s>/{model.ckpt, history.jsonl, metrics.json}` and `summary.json`.
///
/// A run that aborts on a non-finite value still writes its best checkpoint;
/// the command then fails with a numerical error.
pub fn train(cfg: &RunConfig) -> CliResult<TrainSummary> {
    let out = cfg.out_dir()?.to_path_buf();
    create_dir(&out)?;
    let (raw, _) = cfg.load_cohort()?;
    let runs: Vec<SeedMetrics> = cfg
        .seeds
        .par_iter()
        .map(|&seed| train_seed(cfg, &raw, seed, out.join(format!("seed_{seed}"))))
        .collect::<CliResult<_>>()?;

    let pick = |f: fn(&RunMetrics) -> f64| runs.iter().map(|r| f(&r.run)).collect::<Vec<_>>();
    let summary = TrainSummary {
        mode: cfg.mode,
        n_features: runs[0].n_features,
        seeds: cfg.seeds.clone(),
        train_auc: Aggregate::of(&pick(|r| r.train_auc)),
        val_auc: Aggregate::of(&pick(|r| r.val_auc)),
        test_auc: Aggregate::of(&pick(|r| r.test_auc)),
        runs,
    };
    write_json(&out.join("summary.json"), &summary)?;
    if let Some(bad) = summary.runs.iter().find(|r| r.status.starts_with("aborted")) {
        return Err(CliError::Numerical(format!("seed {}: {}", bad.run.seed, bad.status)));
    }
    Ok(summary)
}

fn train_seed(cfg: &RunConfig, raw: &hsumm::cohort::RawCohort, seed: u64, dir: PathBuf) -> CliResult<SeedMetrics> {
    create_dir(&dir)?;
    let config = cfg.train_config(seed);
    let run = run_seed(raw, &config, cfg.test_fraction)?;
    let ckpt = Checkpoint::new(
        &run.fit.best_summary_params,
        &run.fit.best_model_params,
        &config,
        &run.data.stats,
        &raw.variable_names,
        &raw.static_names,
        raw.hours,
    )?;
    ckpt.save(&dir.join("model.ckpt"))?;

    let mut history = String::new();
    for record in &run.fit.history {
        let line = serde_json::to_string(record).map_err(|e| CliError::Numerical(e.to_string()))?;
        let _ = writeln!(history, "{line}");
    }
    write_text(&dir.join("history.jsonl"), &history)?;

    let metrics = SeedMetrics {
        run: run.metrics,
        mode: config.mode,
        n_features: run.fit.best_model_params.n_features(),
        status: status_text(&run.fit.status),
    };
    write_json(&dir.join("metrics.json"), &metrics)?;
    Ok(metrics)
}
