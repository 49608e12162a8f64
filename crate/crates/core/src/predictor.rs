//! Design-matrix assembly and the penalized logistic model on top of it.

use crate::cohort::ClinicalBatch;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};
use crate::summary::{compute_summary_tensor, Relaxation, SummaryKind, SummaryParams, SummaryTensor, NUM_SUMMARIES};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Guard inside the horseshoe penalty so that `β = 0` stays finite.
pub const HORSESHOE_EPS: f64 = 1e-8;

/// Which columns feed the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Learned summaries with sigmoid windows and thresholds, plus statics and the last hour.
    Relaxed,
    /// Summaries with indicator windows and thresholds (durations and thresholds frozen).
    Hard,
    /// Statics and the last hour only.
    TimeOfPredictionOnly,
    /// Statics and every hour of every variable.
    FlatSeries,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 4] = [
        FeatureMode::Relaxed,
        FeatureMode::Hard,
        FeatureMode::TimeOfPredictionOnly,
        FeatureMode::FlatSeries,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Relaxed => "relaxed",
            FeatureMode::Hard => "hard",
            FeatureMode::TimeOfPredictionOnly => "time_of_prediction_only",
            FeatureMode::FlatSeries => "flat_series",
        }
    }

    /// The summary relaxation used by this mode, if it uses summaries at all.
    pub fn relaxation(self) -> Option<Relaxation> {
        match self {
            FeatureMode::Relaxed => Some(Relaxation::Relaxed),
            FeatureMode::Hard => Some(Relaxation::Hard),
            _ => None,
        }
    }

    /// Number of design columns.
    pub fn n_features(self, n_variables: usize, n_static: usize, hours: usize) -> usize {
        match self {
            FeatureMode::Relaxed | FeatureMode::Hard => n_variables * NUM_SUMMARIES + n_static + 2 * n_variables,
            FeatureMode::TimeOfPredictionOnly => n_static + 2 * n_variables,
            FeatureMode::FlatSeries => n_static + 2 * n_variables * hours,
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode '{s}'")))
    }
}

/// What a design column holds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureRef {
    Summary { variable: usize, kind: SummaryKind },
    Static(usize),
    LastValue(usize),
    LastMeasured(usize),
    Value { variable: usize, hour: usize },
    Measured { variable: usize, hour: usize },
}

/// Column layout: `[H (d-major, i-minor), S, X_T, M_T]` for summary modes,
/// `[S, X_T, M_T]` and `[S, X (d-major, t-minor), M]` for the baselines.
pub fn feature_layout(mode: FeatureMode, n_variables: usize, n_static: usize, hours: usize) -> Vec<FeatureRef> {
    let mut cols = Vec::with_capacity(mode.n_features(n_variables, n_static, hours));
    if mode.relaxation().is_some() {
        for variable in 0..n_variables {
            for kind in SummaryKind::ALL {
                cols.push(FeatureRef::Summary { variable, kind });
            }
        }
    }
    cols.extend((0..n_static).map(FeatureRef::Static));
    if mode == FeatureMode::FlatSeries {
        for variable in 0..n_variables {
            cols.extend((1..=hours).map(|hour| FeatureRef::Value { variable, hour }));
        }
        for variable in 0..n_variables {
            cols.extend((1..=hours).map(|hour| FeatureRef::Measured { variable, hour }));
        }
    } else {
        cols.extend((0..n_variables).map(FeatureRef::LastValue));
        cols.extend((0..n_variables).map(FeatureRef::LastMeasured));
    }
    cols
}

pub fn feature_names(
    mode: FeatureMode,
    variable_names: &[String],
    static_names: &[String],
    hours: usize,
) -> Vec<String> {
    feature_layout(mode, variable_names.len(), static_names.len(), hours)
        .into_iter()
        .map(|f| match f {
            FeatureRef::Summary { variable, kind } => format!("{}:{}", variable_names[variable], kind),
            FeatureRef::Static(j) => format!("static:{}", static_names[j]),
            FeatureRef::LastValue(d) => format!("xT:{}", variable_names[d]),
            FeatureRef::LastMeasured(d) => format!("mT:{}", variable_names[d]),
            FeatureRef::Value { variable, hour } => format!("x{hour}:{}", variable_names[variable]),
            FeatureRef::Measured { variable, hour } => format!("m{hour}:{}", variable_names[variable]),
        })
        .collect()
}

/// Raw (unstandardized) design row of example `e`; `summaries` is its `D × I` block.
pub(crate) fn fill_design_row<T: Scalar>(
    batch: &ClinicalBatch<T>,
    e: usize,
    summaries: Option<&[T]>,
    mode: FeatureMode,
    out: &mut Vec<T>,
) {
    out.clear();
    if mode.relaxation().is_some() {
        out.extend_from_slice(summaries.expect("summary modes need summaries"));
    }
    out.extend(batch.statics.row(e).iter().copied());
    let last = batch.hours() - 1;
    let x = batch.values.index_axis(Axis(0), e);
    let m = batch.mask.index_axis(Axis(0), e);
    if mode == FeatureMode::FlatSeries {
        out.extend(x.iter().copied());
        out.extend(m.iter().copied());
    } else {
        out.extend(x.column(last).iter().copied());
        out.extend(m.column(last).iter().copied());
    }
}

/// Assembles the `N × F` design matrix. `summaries` is required for the two
/// summary modes and ignored by the baselines.
pub fn assemble_features<T: Scalar>(
    summaries: Option<&SummaryTensor<T>>,
    batch: &ClinicalBatch<T>,
    mode: FeatureMode,
) -> Result<Array2<T>> {
    let n = batch.n_examples();
    let f = mode.n_features(batch.n_variables(), batch.n_static(), batch.hours());
    let h = match (mode.relaxation(), summaries) {
        (Some(_), Some(h)) => {
            if h.values.dim() != (n, batch.n_variables(), NUM_SUMMARIES) {
                return Err(Error::Shape(format!(
                    "summary tensor {:?} does not match batch ({n}, {}, {NUM_SUMMARIES})",
                    h.values.dim(),
                    batch.n_variables()
                )));
            }
            Some(h)
        }
        (Some(_), None) => return Err(Error::Shape(format!("mode {mode} needs a summary tensor"))),
        (None, _) => None,
    };
    let mut design = Array2::<T>::zeros((n, f));
    let mut row = Vec::with_capacity(f);
    for e in 0..n {
        let block = h.map(|h| h.values.index_axis(Axis(0), e).to_owned());
        fill_design_row(
            batch,
            e,
            block.as_ref().map(|b| b.as_slice().expect("owned is contiguous")),
            mode,
            &mut row,
        );
        design.row_mut(e).iter_mut().zip(&row).for_each(|(d, &r)| *d = r);
    }
    Ok(design)
}

/// Classifier coefficients over standardized design columns.
///
/// The linear predictor is `bias + Σ_j coeffs[j] · (x_j − center[j]) / scale[j]`.
/// `center`/`scale` are fixed when the model is initialized and are not learned.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub coeffs: Vec<T>,
    pub bias: T,
    pub feature_names: Vec<String>,
    pub center: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Zero coefficients over unstandardized columns.
    pub fn zeros(feature_names: Vec<String>) -> Self {
        let f = feature_names.len();
        ModelParams {
            coeffs: vec![T::zero(); f],
            bias: T::zero(),
            feature_names,
            center: vec![T::zero(); f],
            scale: vec![T::one(); f],
        }
    }

    pub fn n_features(&self) -> usize {
        self.coeffs.len()
    }

    /// Sets `center`/`scale` to the column means and population standard
    /// deviations of `design` (floored at 1e-6).
    pub fn standardize_to(&mut self, design: &Array2<T>) -> Result<()> {
        if design.ncols() != self.n_features() || design.nrows() == 0 {
            return Err(Error::Shape(format!(
                "design has {} columns, model {}",
                design.ncols(),
                self.n_features()
            )));
        }
        let n = T::from_usize_lossy(design.nrows());
        for (j, col) in design.axis_iter(Axis(1)).enumerate() {
            let mean = col.iter().copied().sum::<T>() / n;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            self.center[j] = mean;
            self.scale[j] = var.sqrt().max(T::lit(1e-6));
        }
        Ok(())
    }

    /// Linear predictor of one raw design row.
    #[inline]
    pub fn logit_of(&self, row: &[T]) -> T {
        self.bias
            + row
                .iter()
                .zip(&self.coeffs)
                .zip(self.center.iter().zip(&self.scale))
                .map(|((&x, &b), (&c, &s))| b * (x - c) / s)
                .sum::<T>()
    }
}

pub fn logits<T: Scalar>(design: &Array2<T>, params: &ModelParams<T>) -> Result<Vec<T>> {
    if design.ncols() != params.n_features() {
        return Err(Error::Shape(format!(
            "design has {} columns, model {}",
            design.ncols(),
            params.n_features()
        )));
    }
    Ok(design
        .axis_iter(Axis(0))
        .map(|row| params.logit_of(row.as_slice().expect("design rows are contiguous")))
        .collect())
}

/// `ŷ = σ(logit)`.
pub fn predict<T: Scalar>(design: &Array2<T>, params: &ModelParams<T>) -> Result<Vec<T>> {
    Ok(logits(design, params)?.into_iter().map(sigmoid).collect())
}

/// `−(1/N) Σ ω_n [y_n ln ŷ_n + (1 − y_n) ln(1 − ŷ_n)]` from probabilities.
pub fn weighted_bce<T: Scalar>(probs: &[T], labels: &[u8], weights: &[T]) -> Result<T> {
    if probs.len() != labels.len() || weights.len() != labels.len() || labels.is_empty() {
        return Err(Error::Shape("probabilities, labels and weights must align".into()));
    }
    let mut total = T::zero();
    for ((&p, &y), &w) in probs.iter().zip(labels).zip(weights) {
        if !p.is_finite() || !w.is_finite() || p < T::zero() || p > T::one() {
            return Err(Error::NonFinite {
                block: "predictions".into(),
                detail: format!("probability {p} with weight {w}"),
            });
        }
        total += w * if y == 1 { -p.ln() } else { -(T::one() - p).ln() };
    }
    Ok(total / T::from_usize_lossy(labels.len()))
}

/// Same loss from logits, via `ln σ(z) = −softplus(−z)`.
pub fn weighted_bce_logits<T: Scalar>(logits: &[T], labels: &[u8], weights: &[T]) -> Result<T> {
    if logits.len() != labels.len() || weights.len() != labels.len() || labels.is_empty() {
        return Err(Error::Shape("logits, labels and weights must align".into()));
    }
    let total: T = logits
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((&z, &y), &w)| w * example_loss(z, y))
        .sum();
    Ok(total / T::from_usize_lossy(labels.len()))
}

/// Unweighted cross-entropy of one example from its logit.
#[inline]
pub(crate) fn example_loss<T: Scalar>(z: T, y: u8) -> T {
    if y == 1 {
        softplus(-z)
    } else {
        softplus(z)
    }
}

/// `Ω(β) = Σ_j −ln ln(1 + 2τ² / (β_j² + ε))`.
pub fn horseshoe_penalty<T: Scalar>(coeffs: &[T], shrinkage: T) -> T {
    let two_tau2 = T::lit(2.0) * shrinkage * shrinkage;
    let eps = T::lit(HORSESHOE_EPS);
    coeffs.iter().map(|&b| -(two_tau2 / (b * b + eps)).ln_1p().ln()).sum()
}

/// `∂Ω/∂β_j`.
pub fn horseshoe_gradient<T: Scalar>(beta: T, shrinkage: T) -> T {
    let two_tau2 = T::lit(2.0) * shrinkage * shrinkage;
    let r = beta * beta + T::lit(HORSESHOE_EPS);
    let g = (two_tau2 / r).ln_1p();
    T::lit(2.0) * two_tau2 * beta / (g * r * (r + two_tau2))
}

/// Optimizer, regularization and feature settings of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Learning rate for durations and thresholds; `None` uses `learning_rate`.
    pub summary_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub eval_interval: usize,
    /// Evaluations without validation-AUC improvement before stopping.
    pub patience: usize,
    /// Penalty coefficient `α`.
    pub alpha: f64,
    /// Horseshoe shrinkage `τ_hs`.
    pub shrinkage: f64,
    /// Sigmoid temperature `τ`.
    pub temperature: f64,
    pub mode: FeatureMode,
    pub seed: u64,
    /// Share of the training split held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            summary_learning_rate: None,
            batch_size: 256,
            max_epochs: 5000,
            eval_interval: 100,
            patience: 50,
            alpha: 1e-5,
            shrinkage: 1.0,
            temperature: 0.1,
            mode: FeatureMode::Relaxed,
            seed: 0,
            validation_fraction: 0.15,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate >= 0.0),
            (
                "summary_learning_rate",
                self.summary_learning_rate.is_none_or(|r| r >= 0.0),
            ),
            ("alpha", self.alpha >= 0.0),
            ("shrinkage", self.shrinkage > 0.0),
            ("temperature", self.temperature > 0.0),
            ("batch_size", self.batch_size >= 1),
            ("eval_interval", self.eval_interval >= 1),
            (
                "validation_fraction",
                self.validation_fraction > 0.0 && self.validation_fraction < 1.0,
            ),
        ];
        match positive.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::InvalidArgument(format!("invalid {name}"))),
            None => Ok(()),
        }
    }
}

/// Summary tensor for the mode (if any) and the raw design matrix.
pub fn design_matrix<T: Scalar>(
    summary_params: &SummaryParams<T>,
    batch: &ClinicalBatch<T>,
    mode: FeatureMode,
) -> Result<Array2<T>> {
    let h = match mode.relaxation() {
        Some(relax) => Some(compute_summary_tensor(batch, summary_params, relax)?),
        None => None,
    };
    assemble_features(h.as_ref(), batch, mode)
}

/// Weighted cross-entropy plus `α · Ω(coeffs)`; the bias is not penalized.
pub fn total_loss<T: Scalar>(
    summary_params: &SummaryParams<T>,
    model_params: &ModelParams<T>,
    batch: &ClinicalBatch<T>,
    weights: &[T],
    config: &TrainConfig,
) -> Result<T> {
    let design = design_matrix(summary_params, batch, config.mode)?;
    let z = logits(&design, model_params)?;
    let bce = weighted_bce_logits(&z, &batch.labels, weights)?;
    Ok(bce + T::lit(config.alpha) * horseshoe_penalty(&model_params.coeffs, T::lit(config.shrinkage)))
}
