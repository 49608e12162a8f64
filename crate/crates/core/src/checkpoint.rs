//! Versioned JSON document holding a fitted model and everything needed to
//! score a new cohort with it.

use crate::cohort::{apply_normalization, ClinicalBatch, NormalizationStats, RawCohort};
use crate::error::{Error, Result};
use crate::predictor::{feature_names, FeatureMode, ModelParams, TrainConfig};
use crate::summary::{SummaryParams, NUM_SUMMARIES};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model. `C` is `D` rows of `I` durations; `feature_center` and
/// `feature_scale` standardize the design columns before `coeffs` apply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    #[serde(rename = "D")]
    pub n_variables: usize,
    #[serde(rename = "I")]
    pub n_summaries: usize,
    #[serde(rename = "P")]
    pub n_static: usize,
    #[serde(rename = "T")]
    pub hours: usize,
    pub feature_names: Vec<String>,
    pub coeffs: Vec<f64>,
    pub bias: f64,
    #[serde(rename = "C")]
    pub durations: Vec<Vec<f64>>,
    pub phi_plus: Vec<f64>,
    pub phi_minus: Vec<f64>,
    pub tau_temp: f64,
    pub normalization: NormalizationStats,
    pub config: TrainConfig,
    pub seed: u64,
    pub variable_names: Vec<String>,
    pub static_names: Vec<String>,
    pub feature_center: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

impl Checkpoint {
    pub fn new(
        summary_params: &SummaryParams<f64>,
        model_params: &ModelParams<f64>,
        config: &TrainConfig,
        normalization: &NormalizationStats,
        variable_names: &[String],
        static_names: &[String],
        hours: usize,
    ) -> Result<Self> {
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            n_variables: variable_names.len(),
            n_summaries: NUM_SUMMARIES,
            n_static: static_names.len(),
            hours,
            feature_names: model_params.feature_names.clone(),
            coeffs: model_params.coeffs.clone(),
            bias: model_params.bias,
            durations: summary_params
                .durations
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            phi_plus: summary_params.phi_plus.clone(),
            phi_minus: summary_params.phi_minus.clone(),
            tau_temp: summary_params.temperature,
            normalization: normalization.clone(),
            config: config.clone(),
            seed: config.seed,
            variable_names: variable_names.to_vec(),
            static_names: static_names.to_vec(),
            feature_center: model_params.center.clone(),
            feature_scale: model_params.scale.clone(),
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn mode(&self) -> FeatureMode {
        self.config.mode
    }

    fn format_error(&self, message: impl Into<String>) -> Error {
        Error::Checkpoint {
            version: self.version,
            message: message.into(),
        }
    }

    /// Dimensions, names and values agree with each other.
    pub fn validate(&self) -> Result<()> {
        let (d, p, t) = (self.n_variables, self.n_static, self.hours);
        if self.n_summaries != NUM_SUMMARIES {
            return Err(self.format_error(format!("I = {}, expected {NUM_SUMMARIES}", self.n_summaries)));
        }
        if self.variable_names.len() != d || self.static_names.len() != p {
            return Err(self.format_error("variable or static name count disagrees with D/P"));
        }
        if self.durations.len() != d || self.durations.iter().any(|r| r.len() != NUM_SUMMARIES) {
            return Err(self.format_error(format!("C must be {d} rows of {NUM_SUMMARIES}")));
        }
        if self.phi_plus.len() != d || self.phi_minus.len() != d {
            return Err(self.format_error("phi_plus/phi_minus length disagrees with D"));
        }
        let expected = feature_names(self.mode(), &self.variable_names, &self.static_names, t);
        if self.feature_names != expected {
            return Err(self.format_error(format!(
                "feature_names do not match mode {} with D = {d}, P = {p}, T = {t}",
                self.mode()
            )));
        }
        let f = expected.len();
        if self.coeffs.len() != f || self.feature_center.len() != f || self.feature_scale.len() != f {
            return Err(self.format_error(format!("coeffs/feature_center/feature_scale must have {f} entries")));
        }
        let stats = &self.normalization;
        if stats.mean.len() != d || stats.std.len() != d || stats.population_median.len() != d {
            return Err(self.format_error("normalization statistics disagree with D"));
        }
        if stats.static_mean.len() != p || stats.static_std.len() != p {
            return Err(self.format_error("static normalization statistics disagree with P"));
        }
        let finite = self
            .coeffs
            .iter()
            .chain(self.durations.iter().flatten())
            .chain(&self.phi_plus)
            .chain(&self.phi_minus)
            .chain(&self.feature_center)
            .chain(&self.feature_scale)
            .chain([&self.bias, &self.tau_temp])
            .all(|v| v.is_finite());
        if !finite {
            return Err(self.format_error("non-finite parameter"));
        }
        self.summary_params().validate(d, t)
    }

    pub fn summary_params(&self) -> SummaryParams<f64> {
        let flat: Vec<f64> = self.durations.iter().flatten().copied().collect();
        SummaryParams {
            durations: Array2::from_shape_vec((self.durations.len(), NUM_SUMMARIES), flat)
                .unwrap_or_else(|_| Array2::zeros((0, NUM_SUMMARIES))),
            phi_plus: self.phi_plus.clone(),
            phi_minus: self.phi_minus.clone(),
            temperature: self.tau_temp,
        }
    }

    pub fn model_params(&self) -> ModelParams<f64> {
        ModelParams {
            coeffs: self.coeffs.clone(),
            bias: self.bias,
            feature_names: self.feature_names.clone(),
            center: self.feature_center.clone(),
            scale: self.feature_scale.clone(),
        }
    }

    /// Imputes with the stored medians and normalizes with the stored
    /// statistics. The cohort must have this checkpoint's variables (in order)
    /// and horizon; static columns are aligned by name.
    pub fn prepare(&self, raw: &RawCohort) -> Result<ClinicalBatch<f64>> {
        if raw.variable_names != self.variable_names {
            return Err(Error::Schema(format!(
                "cohort variables [{}] differ from the checkpoint's [{}]",
                raw.variable_names.join(","),
                self.variable_names.join(",")
            )));
        }
        if raw.hours != self.hours {
            return Err(Error::Schema(format!(
                "cohort has {} hours, checkpoint {}",
                raw.hours, self.hours
            )));
        }
        let mut raw = raw.clone();
        raw.align_statics(&self.static_names)?;
        let batch = raw.impute(&self.normalization.population_median)?;
        apply_normalization(&batch, &self.normalization)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| self.format_error(e.to_string()))
    }

    /// Parses a document, checking the version before the fields.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Checkpoint {
            version: 0,
            message: format!("not a JSON document: {e}"),
        })?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Checkpoint {
                version: 0,
                message: "missing field `version`".into(),
            })? as u32;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint {
                version,
                message: format!("unsupported version; this build reads version {CHECKPOINT_VERSION}"),
            });
        }
        let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| Error::Checkpoint {
            version,
            message: e.to_string(),
        })?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
