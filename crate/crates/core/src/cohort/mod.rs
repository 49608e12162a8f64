//! Batch data model, CSV ingestion, imputation, normalization and splitting.

mod impute;
mod ingest;
mod normalize;
mod split;

pub use impute::{impute, impute_in_place};
pub use ingest::{ingest_csv, write_csv, IngestOptions, RawCohort, RawPatient};
pub use normalize::{apply_normalization, denormalize, fit_normalization, NormalizationStats, STD_FLOOR};
pub use split::{split_by_patient, split_indices};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array2, Array3, Axis};

/// Masked measurements, statics and labels for `N` examples over `T` hours.
///
/// `values` and `mask` are `N × D × T`; `statics` is `N × P`. Every value at a
/// position where the mask is 0 holds the imputed filler, never NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct ClinicalBatch<T> {
    pub values: Array3<T>,
    pub mask: Array3<T>,
    pub statics: Array2<T>,
    pub labels: Vec<u8>,
    pub patient_ids: Vec<String>,
    pub variable_names: Vec<String>,
    pub static_names: Vec<String>,
}

impl<T: Scalar> ClinicalBatch<T> {
    pub fn new(
        values: Array3<T>,
        mask: Array3<T>,
        statics: Array2<T>,
        labels: Vec<u8>,
        patient_ids: Vec<String>,
        variable_names: Vec<String>,
        static_names: Vec<String>,
    ) -> Result<Self> {
        let batch = ClinicalBatch {
            values,
            mask,
            statics,
            labels,
            patient_ids,
            variable_names,
            static_names,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d, t) = self.values.dim();
        if self.mask.dim() != (n, d, t) {
            return Err(Error::Shape(format!(
                "values are {:?} but mask is {:?}",
                (n, d, t),
                self.mask.dim()
            )));
        }
        if t == 0 {
            return Err(Error::Shape("a batch needs at least one hour".into()));
        }
        if self.statics.nrows() != n {
            return Err(Error::Shape(format!(
                "{} static rows for {n} examples",
                self.statics.nrows()
            )));
        }
        if self.labels.len() != n || self.patient_ids.len() != n {
            return Err(Error::Shape(format!(
                "{n} examples but {} labels and {} patient ids",
                self.labels.len(),
                self.patient_ids.len()
            )));
        }
        if self.variable_names.len() != d || self.static_names.len() != self.statics.ncols() {
            return Err(Error::Shape("name lists do not match tensor dimensions".into()));
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        if self.mask.iter().any(|&m| m != T::zero() && m != T::one()) {
            return Err(Error::InvalidArgument("mask entries must be 0 or 1".into()));
        }
        if self.values.iter().chain(self.statics.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                block: "batch".into(),
                detail: "values and statics must be finite".into(),
            });
        }
        Ok(())
    }

    pub fn n_examples(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_variables(&self) -> usize {
        self.values.dim().1
    }

    pub fn hours(&self) -> usize {
        self.values.dim().2
    }

    pub fn n_static(&self) -> usize {
        self.statics.ncols()
    }

    pub fn prevalence(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().map(|&y| y as f64).sum::<f64>() / self.labels.len() as f64
    }

    /// Rows `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        ClinicalBatch {
            values: self.values.select(Axis(0), indices),
            mask: self.mask.select(Axis(0), indices),
            statics: self.statics.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            patient_ids: indices.iter().map(|&i| self.patient_ids[i].clone()).collect(),
            variable_names: self.variable_names.clone(),
            static_names: self.static_names.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ClinicalBatch<U> {
        let conv = |v: &T| U::lit(v.to_f64_lossy());
        ClinicalBatch {
            values: self.values.map(conv),
            mask: self.mask.map(conv),
            statics: self.statics.map(conv),
            labels: self.labels.clone(),
            patient_ids: self.patient_ids.clone(),
            variable_names: self.variable_names.clone(),
            static_names: self.static_names.clone(),
        }
    }
}

/// Inverse class-frequency weights, `ω_n = N / (2 · #{m : y_m = y_n})`.
///
/// Both classes then carry a total weight of `N / 2`.
pub fn class_weights<T: Scalar>(labels: &[u8]) -> Result<Vec<T>> {
    let n = labels.len();
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = n - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let half = T::from_usize_lossy(n) / T::lit(2.0);
    let w_pos = half / T::from_usize_lossy(positives);
    let w_neg = half / T::from_usize_lossy(negatives);
    Ok(labels.iter().map(|&y| if y == 1 { w_pos } else { w_neg }).collect())
}
