//! AUC, top-N coefficient ablation and the key-feature report.

use crate::cohort::{ClinicalBatch, NormalizationStats};
use crate::error::{Error, Result};
use crate::predictor::{design_matrix, feature_layout, logits, FeatureMode, FeatureRef, ModelParams};
use crate::scalar::Scalar;
use crate::summary::{SummaryKind, SummaryParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt::Write as _;

/// Area under the ROC curve (Mann–Whitney U with average ranks for ties).
pub fn auc<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let s: Vec<f64> = scores.iter().map(|v| v.to_f64_lossy()).collect();
    if s.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite {
            block: "scores".into(),
            detail: "AUC of NaN scores".into(),
        });
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap_or(Ordering::Equal));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && s[order[j + 1]] == s[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let rank = (i + j + 2) as f64 / 2.0;
        pos_rank_sum += rank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Keeps the `n` largest-magnitude coefficients (ties to the lower index) and
/// zeros the rest; the bias is untouched.
pub fn ablate_top_n<T: Scalar>(params: &ModelParams<T>, n: usize) -> ModelParams<T> {
    let mut out = params.clone();
    for j in rank_by_magnitude(&params.coeffs).into_iter().skip(n) {
        out.coeffs[j] = T::zero();
    }
    out
}

/// Column indices by descending `|coefficient|`, ties by ascending index.
pub fn rank_by_magnitude<T: Scalar>(coeffs: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| {
        coeffs[b]
            .abs()
            .partial_cmp(&coeffs[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Gini coefficient of `|values|`: 0 when all magnitudes are equal, towards 1
/// when one entry holds all the mass. 0 for an all-zero vector.
pub fn gini<T: Scalar>(values: &[T]) -> f64 {
    let mut a: Vec<f64> = values.iter().map(|v| v.to_f64_lossy().abs()).collect();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    let n = a.len() as f64;
    let total: f64 = a.iter().sum();
    if a.is_empty() || total == 0.0 {
        return 0.0;
    }
    let weighted: f64 = a
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * (i as f64 + 1.0) - n - 1.0) * v)
        .sum();
    weighted / (n * total)
}

/// Test AUC after keeping only the top `n` coefficients, for each `n` in
/// `n_list`; summary parameters stay at their fitted values. Sorted by `n`.
pub fn ablation_curve<T: Scalar>(
    summary_params: &SummaryParams<T>,
    model_params: &ModelParams<T>,
    mode: FeatureMode,
    test: &ClinicalBatch<T>,
    n_list: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let design = design_matrix(summary_params, test, mode)?;
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    ns.par_iter()
        .map(|&n| {
            let z = logits(&design, &ablate_top_n(model_params, n))?;
            Ok((n, auc(&z, &test.labels)?))
        })
        .collect()
}

/// One line of the key-feature report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyFeatureRow {
    pub rank: usize,
    pub variable: String,
    /// Machine name: a summary kind, `static`, `value_at_T` or `measured_at_T`.
    pub summary: String,
    /// Human-readable description, e.g. `hours below 92.36`.
    pub phrase: String,
    /// `[start, end]` hours (1-based, inclusive); `None` for static columns.
    pub window: Option<(usize, usize)>,
    /// Threshold in raw units (threshold summaries only).
    pub threshold_raw: Option<f64>,
    pub coefficient: f64,
}

impl KeyFeatureRow {
    /// `phrase / hours a - b`.
    pub fn describe(&self) -> String {
        match self.window {
            Some((a, b)) => format!("{} {} / hours {a} - {b}", self.variable, self.phrase),
            None => format!("{} {}", self.variable, self.phrase),
        }
    }
}

/// Window covered by a duration `C`: `[max(1, T − round(C) + 1), T]`.
pub fn window_of(duration: f64, hours: usize) -> (usize, usize) {
    let c = duration.round().clamp(0.0, hours as f64) as usize;
    ((hours + 1).saturating_sub(c).clamp(1, hours), hours)
}

fn phrase(kind: SummaryKind, threshold: Option<f64>) -> String {
    match kind {
        SummaryKind::Mean => "mean over".into(),
        SummaryKind::Variance => "variance over".into(),
        SummaryKind::EverMeasured => "ever measured over".into(),
        SummaryKind::IndicatorMean => "times measured over".into(),
        SummaryKind::IndicatorVariance => "measurement variance over".into(),
        SummaryKind::SwitchCount => "measurement switches over".into(),
        SummaryKind::FirstMeasured => "first measured hour within".into(),
        SummaryKind::LastMeasured => "last measured hour within".into(),
        SummaryKind::FracAbove => format!("hours above {:.2}", threshold.unwrap_or(f64::NAN)),
        SummaryKind::FracBelow => format!("hours below {:.2}", threshold.unwrap_or(f64::NAN)),
        SummaryKind::Slope => "slope over".into(),
        SummaryKind::SlopeStderr => "slope std. error over".into(),
    }
}

/// The `top_k` design columns by coefficient magnitude, with windows from the
/// learned durations and thresholds converted back to raw units.
pub fn key_feature_report(
    summary_params: &SummaryParams<f64>,
    model_params: &ModelParams<f64>,
    mode: FeatureMode,
    variable_names: &[String],
    static_names: &[String],
    hours: usize,
    stats: &NormalizationStats,
    top_k: usize,
) -> Result<Vec<KeyFeatureRow>> {
    let layout = feature_layout(mode, variable_names.len(), static_names.len(), hours);
    if layout.len() != model_params.n_features() {
        return Err(Error::Shape(format!(
            "model has {} coefficients, layout {}",
            model_params.n_features(),
            layout.len()
        )));
    }
    let rows = rank_by_magnitude(&model_params.coeffs)
        .into_iter()
        .take(top_k)
        .enumerate()
        .map(|(r, j)| {
            let coefficient = model_params.coeffs[j];
            let (variable, summary, phrase_text, window, threshold_raw) = match &layout[j] {
                FeatureRef::Summary { variable: d, kind } => {
                    let d = *d;
                    let threshold = match kind {
                        SummaryKind::FracAbove => Some(stats.denormalize_value(d, summary_params.phi_plus[d])),
                        SummaryKind::FracBelow => Some(stats.denormalize_value(d, summary_params.phi_minus[d])),
                        _ => None,
                    };
                    let window = if kind.is_windowed() {
                        window_of(summary_params.durations[[d, kind.index()]], hours)
                    } else {
                        (1, hours)
                    };
                    (
                        variable_names[d].clone(),
                        kind.name().to_string(),
                        phrase(*kind, threshold),
                        Some(window),
                        threshold,
                    )
                }
                FeatureRef::Static(s) => (
                    static_names[*s].clone(),
                    "static".into(),
                    "static value".into(),
                    None,
                    None,
                ),
                FeatureRef::LastValue(d) => (
                    variable_names[*d].clone(),
                    "value_at_T".into(),
                    format!("value at hour {hours}"),
                    Some((hours, hours)),
                    None,
                ),
                FeatureRef::LastMeasured(d) => (
                    variable_names[*d].clone(),
                    "measured_at_T".into(),
                    format!("measured at hour {hours}"),
                    Some((hours, hours)),
                    None,
                ),
                FeatureRef::Value { variable, hour } => (
                    variable_names[*variable].clone(),
                    "value".into(),
                    format!("value at hour {hour}"),
                    Some((*hour, *hour)),
                    None,
                ),
                FeatureRef::Measured { variable, hour } => (
                    variable_names[*variable].clone(),
                    "measured".into(),
                    format!("measured at hour {hour}"),
                    Some((*hour, *hour)),
                    None,
                ),
            };
            KeyFeatureRow {
                rank: r + 1,
                variable,
                summary,
                phrase: phrase_text,
                window,
                threshold_raw,
                coefficient,
            }
        })
        .collect();
    Ok(rows)
}

/// Tab-separated report with a header line; fields that do not apply are empty.
pub fn report_tsv(rows: &[KeyFeatureRow]) -> String {
    let mut out = String::from("rank\tvariable\tsummary\twindow_start\twindow_end\tthreshold_raw\tcoefficient\n");
    for row in rows {
        let (start, end) = row
            .window
            .map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
        let threshold = row.threshold_raw.map_or(String::new(), |t| format!("{t:.4}"));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{start}\t{end}\t{threshold}\t{:.6}",
            row.rank, row.variable, row.summary, row.coefficient
        );
    }
    out
}

/// Tab-separated ablation curve with a header line.
pub fn ablation_tsv(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("n\ttest_auc\n");
    for (n, a) in curve {
        let _ = writeln!(out, "{n}\t{a:.6}");
    }
    out
}
