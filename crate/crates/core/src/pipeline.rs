//! End-to-end preparation of a raw cohort into normalized train, validation
//! and test batches, and single-seed training runs on top of it.

use crate::cohort::{
    apply_normalization, fit_normalization, split_indices, ClinicalBatch, NormalizationStats, RawCohort,
};
use crate::error::Result;
use crate::evaluator::auc;
use crate::predictor::{design_matrix, logits, ModelParams, TrainConfig};
use crate::summary::SummaryParams;
use crate::trainer::{train, FitResult};
use serde::{Deserialize, Serialize};

/// Offset mixed into the seed for the validation split, so it is not a
/// replay of the test split's shuffle.
const VALIDATION_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Patient-level partition of a cohort's rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    /// Rows the optimizer sees.
    pub fit: Vec<usize>,
    /// Rows held out from training for early stopping.
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// Training side: fit and validation rows, in cohort order.
    pub fn train_all(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.fit.iter().chain(&self.val).copied().collect();
        all.sort_unstable();
        all
    }
}

/// Stratified, seeded split into test and training sides, then of the
/// training side into fit and validation rows.
pub fn split_cohort(raw: &RawCohort, test_fraction: f64, validation_fraction: f64, seed: u64) -> Result<SplitIndices> {
    let ids: Vec<String> = raw.patients.iter().map(|p| p.id.clone()).collect();
    let labels: Vec<u8> = raw.patients.iter().map(|p| p.label).collect();
    let (train_all, test) = split_indices(&ids, &labels, test_fraction, seed)?;
    let sub_ids: Vec<String> = train_all.iter().map(|&i| ids[i].clone()).collect();
    let sub_labels: Vec<u8> = train_all.iter().map(|&i| labels[i]).collect();
    let (fit_local, val_local) =
        split_indices(&sub_ids, &sub_labels, validation_fraction, seed ^ VALIDATION_SEED_SALT)?;
    Ok(SplitIndices {
        fit: fit_local.iter().map(|&i| train_all[i]).collect(),
        val: val_local.iter().map(|&i| train_all[i]).collect(),
        test,
    })
}

/// Normalized batches of one train/test split.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: ClinicalBatch<f64>,
    pub val: ClinicalBatch<f64>,
    pub test: ClinicalBatch<f64>,
    pub stats: NormalizationStats,
    pub split: SplitIndices,
}

/// Splits by patient with [`split_cohort`], imputes with medians of the
/// training side, fits normalization on the training side (training plus
/// validation rows) and applies it everywhere.
pub fn prepare(raw: &RawCohort, test_fraction: f64, validation_fraction: f64, seed: u64) -> Result<PreparedData> {
    let split = split_cohort(raw, test_fraction, validation_fraction, seed)?;
    let train_all = split.train_all();
    let medians = raw.measured_medians(Some(&train_all));
    let batch: ClinicalBatch<f64> = raw.impute(&medians)?;
    let mut stats = fit_normalization(&batch.select(&train_all))?;
    stats.population_median = medians;
    let normalized = apply_normalization(&batch, &stats)?;
    Ok(PreparedData {
        train: normalized.select(&split.fit),
        val: normalized.select(&split.val),
        test: normalized.select(&split.test),
        stats,
        split,
    })
}

/// AUC of a fitted model on a normalized batch.
pub fn model_auc(
    summary_params: &SummaryParams<f64>,
    model_params: &ModelParams<f64>,
    config: &TrainConfig,
    batch: &ClinicalBatch<f64>,
) -> Result<f64> {
    let design = design_matrix(summary_params, batch, config.mode)?;
    auc(&logits(&design, model_params)?, &batch.labels)
}

/// Train and test AUC of the best-by-validation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub train_auc: f64,
    pub val_auc: f64,
    pub test_auc: f64,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

/// One seed: prepare the split, train, and score the best parameters.
pub struct SeedRun {
    pub data: PreparedData,
    pub fit: FitResult,
    pub metrics: RunMetrics,
}

pub fn run_seed(raw: &RawCohort, config: &TrainConfig, test_fraction: f64) -> Result<SeedRun> {
    let data = prepare(raw, test_fraction, config.validation_fraction, config.seed)?;
    let fit = train(&data.train, &data.val, config)?;
    let (sp, mp) = (&fit.best_summary_params, &fit.best_model_params);
    let metrics = RunMetrics {
        seed: config.seed,
        train_auc: model_auc(sp, mp, config, &data.train)?,
        val_auc: fit.best_val_auc,
        test_auc: model_auc(sp, mp, config, &data.test)?,
        best_epoch: fit.best_epoch,
        stopped_epoch: fit.stopped_epoch,
    };
    Ok(SeedRun { data, fit, metrics })
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `"0.8867 ± 0.0061"`.
pub fn format_mean_se(values: &[f64]) -> String {
    let (m, se) = mean_and_se(values);
    format!("{m:.4} ± {se:.4}")
}
