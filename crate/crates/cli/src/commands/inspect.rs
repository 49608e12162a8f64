//! Commands that read a checkpoint: `eval`, `ablate` and `report`.

use super::{create_dir, write_json, write_text};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use hsumm::evaluator::{ablation_curve, ablation_tsv, key_feature_report, report_tsv, KeyFeatureRow};
use hsumm::pipeline::split_cohort;
use hsumm::trainer::evaluate_fit;
use hsumm::{Checkpoint, ClinicalBatch};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Which patients of the configured cohort to score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Every patient (a held-out cohort).
    #[default]
    All,
    /// The rows the checkpoint was fitted on.
    Train,
    /// The early-stopping rows of the checkpoint's split.
    Val,
    /// The test rows of the checkpoint's split.
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::All => "all",
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Split::All, Split::Train, Split::Val, Split::Test]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown split '{s}' (expected all, train, val or test)"))
    }
}

/// The configured cohort, imputed and normalized with the checkpoint's
/// statistics, restricted to `split`. Non-`all` splits are recomputed from the
/// checkpoint's seed and validation fraction and the configured test fraction.
pub fn select_split(cfg: &RunConfig, ckpt: &Checkpoint, split: Split) -> CliResult<ClinicalBatch<f64>> {
    let (raw, _) = cfg.load_cohort()?;
    let batch = ckpt.prepare(&raw)?;
    let rows = match split {
        Split::All => return Ok(batch),
        _ => split_cohort(&raw, cfg.test_fraction, ckpt.config.validation_fraction, ckpt.seed)?,
    };
    Ok(batch.select(match split {
        Split::Train => &rows.fit,
        Split::Val => &rows.val,
        _ => &rows.test,
    }))
}

/// Contents of `eval.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub split: Split,
    pub n_examples: usize,
    pub prevalence: f64,
    pub auc: f64,
    /// Class-weighted loss including the penalty, as optimized in training.
    pub loss: f64,
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path, split: Split) -> CliResult<EvalMetrics> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let batch = select_split(cfg, &ckpt, split)?;
    let (loss, auc) = evaluate_fit(&ckpt.summary_params(), &ckpt.model_params(), &batch, &ckpt.config)?;
    let metrics = EvalMetrics {
        split,
        n_examples: batch.n_examples(),
        prevalence: batch.prevalence(),
        auc,
        loss,
    };
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_json(&out.join("eval.json"), &metrics)?;
    }
    Ok(metrics)
}

/// Default ablation sizes, capped at the number of coefficients (always included).
fn default_n_list(n_features: usize) -> Vec<usize> {
    let mut ns: Vec<usize> = [0, 1, 2, 5, 10, 15, 20, 30, 50, 100, 200]
        .into_iter()
        .filter(|&n| n < n_features)
        .collect();
    ns.push(n_features);
    ns
}

/// Test AUC after zeroing all but the top-`n` coefficients, for each `n`;
/// writes `ablation.tsv` when an output directory is configured.
pub fn ablate(cfg: &RunConfig, checkpoint: &Path, n_list: Option<&[usize]>, split: Split) -> CliResult<String> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let batch = select_split(cfg, &ckpt, split)?;
    let ns = match n_list {
        Some(ns) if ns.is_empty() => return Err(CliError::Usage("--n-list is empty".into())),
        Some(ns) => ns.to_vec(),
        None => default_n_list(ckpt.coeffs.len()),
    };
    let curve = ablation_curve(&ckpt.summary_params(), &ckpt.model_params(), ckpt.mode(), &batch, &ns)?;
    let tsv = ablation_tsv(&curve);
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_text(&out.join("ablation.tsv"), &tsv)?;
    }
    Ok(tsv)
}

/// The `top_k` largest coefficients with windows and raw-unit thresholds;
/// writes `report.tsv` when an output directory is configured.
pub fn report(out: Option<&Path>, checkpoint: &Path, top_k: usize) -> CliResult<(Vec<KeyFeatureRow>, String)> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let rows = key_feature_report(
        &ckpt.summary_params(),
        &ckpt.model_params(),
        ckpt.mode(),
        &ckpt.variable_names,
        &ckpt.static_names,
        ckpt.hours,
        &ckpt.normalization,
        top_k,
    )?;
    let tsv = report_tsv(&rows);
    if let Some(out) = out {
        create_dir(out)?;
        write_text(&out.join("report.tsv"), &tsv)?;
    }
    Ok((rows, tsv))
}
