//! Learned, interpretable summaries of masked clinical time series feeding a
//! sparse logistic classifier.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix it to `f64`, which is what training uses.

pub mod checkpoint;
pub mod cohort;
pub mod error;
pub mod evaluator;
pub mod grad;
pub mod pipeline;
pub mod predictor;
pub mod scalar;
pub mod summary;
pub mod synth;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use cohort::{class_weights, ClinicalBatch};
pub use error::{Error, Result};
pub use predictor::{FeatureMode, ModelParams, TrainConfig};
pub use scalar::Scalar;
pub use summary::{Relaxation, SummaryKind, SummaryParams, SummaryTensor, NUM_SUMMARIES};

pub type Batch = ClinicalBatch<f64>;
pub type Summaries = SummaryParams<f64>;
pub type Model = ModelParams<f64>;
