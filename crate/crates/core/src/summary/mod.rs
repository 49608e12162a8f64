//! Duration-windowed, threshold-parameterized summaries of masked series.

pub mod functions;
mod weights;

pub use functions::{evaluate, SummaryContext, EPS};
pub use weights::{compute_weights, compute_weights_hard, window_logit, window_with_derivative, WeightTensor};

use crate::cohort::ClinicalBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Number of summaries computed per variable.
pub const NUM_SUMMARIES: usize = 12;

/// The summary functions, in tensor order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    Mean,
    Variance,
    EverMeasured,
    IndicatorMean,
    IndicatorVariance,
    SwitchCount,
    FirstMeasured,
    LastMeasured,
    FracAbove,
    FracBelow,
    Slope,
    SlopeStderr,
}

impl SummaryKind {
    pub const ALL: [SummaryKind; NUM_SUMMARIES] = [
        SummaryKind::Mean,
        SummaryKind::Variance,
        SummaryKind::EverMeasured,
        SummaryKind::IndicatorMean,
        SummaryKind::IndicatorVariance,
        SummaryKind::SwitchCount,
        SummaryKind::FirstMeasured,
        SummaryKind::LastMeasured,
        SummaryKind::FracAbove,
        SummaryKind::FracBelow,
        SummaryKind::Slope,
        SummaryKind::SlopeStderr,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SummaryKind::Mean => "mean",
            SummaryKind::Variance => "variance",
            SummaryKind::EverMeasured => "ever_measured",
            SummaryKind::IndicatorMean => "indicator_mean",
            SummaryKind::IndicatorVariance => "indicator_variance",
            SummaryKind::SwitchCount => "switch_count",
            SummaryKind::FirstMeasured => "first_measured",
            SummaryKind::LastMeasured => "last_measured",
            SummaryKind::FracAbove => "frac_above",
            SummaryKind::FracBelow => "frac_below",
            SummaryKind::Slope => "slope",
            SummaryKind::SlopeStderr => "slope_stderr",
        }
    }

    /// Uses the duration window (first/last measured span the whole stay).
    pub fn is_windowed(self) -> bool {
        !matches!(self, SummaryKind::FirstMeasured | SummaryKind::LastMeasured)
    }

    /// Depends on the mask only.
    pub fn is_missingness(self) -> bool {
        matches!(
            self,
            SummaryKind::EverMeasured
                | SummaryKind::IndicatorMean
                | SummaryKind::IndicatorVariance
                | SummaryKind::SwitchCount
                | SummaryKind::FirstMeasured
                | SummaryKind::LastMeasured
        )
    }

    pub fn is_threshold(self) -> bool {
        matches!(self, SummaryKind::FracAbove | SummaryKind::FracBelow)
    }
}

impl fmt::Display for SummaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SummaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SummaryKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown summary '{s}'")))
    }
}

/// Relaxed (sigmoid) or hard (indicator) windows and thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    Relaxed,
    Hard,
}

/// Learnable summary parameters: durations `C` (`D × I`, hours), thresholds
/// `φ+`/`φ−` (normalized units) and the sigmoid temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryParams<T> {
    pub durations: Array2<T>,
    pub phi_plus: Vec<T>,
    pub phi_minus: Vec<T>,
    pub temperature: T,
}

impl<T: Scalar> SummaryParams<T> {
    /// Full-window durations (`C = T`) and thresholds at ±1.
    pub fn full_window(n_variables: usize, hours: usize, temperature: T) -> Self {
        SummaryParams {
            durations: Array2::from_elem((n_variables, NUM_SUMMARIES), T::from_usize_lossy(hours)),
            phi_plus: vec![T::one(); n_variables],
            phi_minus: vec![-T::one(); n_variables],
            temperature,
        }
    }

    pub fn n_variables(&self) -> usize {
        self.durations.nrows()
    }

    pub fn validate(&self, n_variables: usize, hours: usize) -> Result<()> {
        if self.durations.dim() != (n_variables, NUM_SUMMARIES)
            || self.phi_plus.len() != n_variables
            || self.phi_minus.len() != n_variables
        {
            return Err(Error::Shape(format!(
                "summary parameters sized for {} variables, batch has {n_variables}",
                self.durations.nrows()
            )));
        }
        if !(self.temperature > T::zero()) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        let total = T::from_usize_lossy(hours);
        if self.durations.iter().any(|&c| !(c >= T::zero() && c <= total)) {
            return Err(Error::InvalidArgument(format!("durations must lie in [0, {hours}]")));
        }
        if self.phi_plus.iter().chain(&self.phi_minus).any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                block: "thresholds".into(),
                detail: "phi values must be finite".into(),
            });
        }
        Ok(())
    }

    /// Projects durations back onto `[0, T]`.
    pub fn clamp(&mut self, hours: usize) {
        let total = T::from_usize_lossy(hours);
        self.durations.mapv_inplace(|c| c.max(T::zero()).min(total));
    }

    pub fn context(&self, d: usize, relaxation: Relaxation) -> SummaryContext<T> {
        SummaryContext {
            phi_plus: self.phi_plus[d],
            phi_minus: self.phi_minus[d],
            temperature: self.temperature,
            relaxation,
        }
    }

    pub fn weights(&self, hours: usize, relaxation: Relaxation) -> WeightTensor<T> {
        match relaxation {
            Relaxation::Relaxed => compute_weights(&self.durations, hours, self.temperature),
            Relaxation::Hard => compute_weights_hard(&self.durations, hours),
        }
    }
}

/// `H`: `N × D × I` summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryTensor<T> {
    pub values: Array3<T>,
}

impl<T> SummaryTensor<T> {
    pub fn summary_names() -> Vec<&'static str> {
        SummaryKind::ALL.iter().map(|k| k.name()).collect()
    }
}

/// Weight columns indexed `[d][i]`, contiguous over hours.
pub(crate) fn weight_columns<T: Scalar>(weights: &WeightTensor<T>, n_variables: usize) -> Vec<Vec<Vec<T>>> {
    (0..n_variables)
        .map(|d| (0..NUM_SUMMARIES).map(|i| weights.column(i, d)).collect())
        .collect()
}

/// Summaries of one example (`D × I`, row-major into `out`).
pub(crate) fn summarize_example<T: Scalar>(
    x: ndarray::ArrayView2<'_, T>,
    m: ndarray::ArrayView2<'_, T>,
    params: &SummaryParams<T>,
    columns: &[Vec<Vec<T>>],
    relaxation: Relaxation,
    out: &mut [T],
) {
    let hours = x.ncols();
    let mut xs = vec![T::zero(); hours];
    let mut ms = vec![T::zero(); hours];
    for d in 0..x.nrows() {
        xs.iter_mut().zip(x.row(d)).for_each(|(a, &b)| *a = b);
        ms.iter_mut().zip(m.row(d)).for_each(|(a, &b)| *a = b);
        let ctx = params.context(d, relaxation);
        for kind in SummaryKind::ALL {
            let i = kind.index();
            out[d * NUM_SUMMARIES + i] = evaluate(kind, &xs, &ms, &columns[d][i], &ctx);
        }
    }
}

/// Evaluates every summary of every variable of every example.
pub fn compute_summary_tensor<T: Scalar>(
    batch: &ClinicalBatch<T>,
    params: &SummaryParams<T>,
    relaxation: Relaxation,
) -> Result<SummaryTensor<T>> {
    let (n, d, hours) = batch.values.dim();
    params.validate(d, hours)?;
    let weights = params.weights(hours, relaxation);
    let columns = weight_columns(&weights, d);
    let mut values = Array3::<T>::zeros((n, d, NUM_SUMMARIES));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(e, mut row)| {
            let out = row.as_slice_mut().expect("fresh tensor is contiguous");
            summarize_example(
                batch.values.index_axis(Axis(0), e),
                batch.mask.index_axis(Axis(0), e),
                params,
                &columns,
                relaxation,
                out,
            );
        });
    Ok(SummaryTensor { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};

    fn fixture_a() -> ClinicalBatch<f64> {
        ClinicalBatch::new(
            Array3::from_shape_vec((1, 1, 4), vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            Array3::from_elem((1, 1, 4), 1.0),
            Array2::zeros((1, 0)),
            vec![1],
            vec!["a".into()],
            vec!["v".into()],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn names_round_trip() {
        for kind in SummaryKind::ALL {
            assert_eq!(kind.name().parse::<SummaryKind>().unwrap(), kind);
            assert_eq!(SummaryKind::ALL[kind.index()], kind);
        }
        assert_eq!(SummaryTensor::<f64>::summary_names().len(), NUM_SUMMARIES);
    }

    #[test]
    fn hard_tensor_ignores_temperature() {
        let batch = fixture_a();
        let mut p = SummaryParams::full_window(1, 4, 0.1);
        p.durations[[0, 0]] = 2.0;
        let a = compute_summary_tensor(&batch, &p, Relaxation::Hard).unwrap();
        p.temperature = 3.0;
        let b = compute_summary_tensor(&batch, &p, Relaxation::Hard).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values[[0, 0, 0]], 3.5);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let batch = fixture_a();
        let mut p = SummaryParams::full_window(1, 4, 0.1);
        p.durations[[0, 3]] = 4.5;
        assert!(compute_summary_tensor(&batch, &p, Relaxation::Relaxed).is_err());
        let p = SummaryParams::full_window(2, 4, 0.1);
        assert!(matches!(
            compute_summary_tensor(&batch, &p, Relaxation::Relaxed),
            Err(Error::Shape(_))
        ));
        let p = SummaryParams::full_window(1, 4, 0.0);
        assert!(compute_summary_tensor(&batch, &p, Relaxation::Relaxed).is_err());
    }

    #[test]
    fn clamp_projects_into_range() {
        let mut p = SummaryParams::full_window(1, 4, 0.1_f64);
        p.durations[[0, 0]] = 4.7;
        p.durations[[0, 1]] = -0.2;
        p.clamp(4);
        assert_eq!((p.durations[[0, 0]], p.durations[[0, 1]]), (4.0, 0.0));
    }
}
