//! Minibatch Adam over coefficients, bias, durations and thresholds, with
//! class-weighted loss, duration clamping and AUC-based early stopping.

use crate::cohort::{class_weights, ClinicalBatch};
use crate::error::{Error, Result};
use crate::evaluator::auc;
use crate::grad::{loss_and_gradients, GradientSet};
use crate::predictor::{
    design_matrix, feature_names, horseshoe_penalty, logits, weighted_bce_logits, ModelParams, TrainConfig,
};
use crate::scalar::logit;
use crate::summary::{Relaxation, SummaryParams};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Initial parameters: full windows (`C = T`), thresholds at ±1, zero
/// coefficients, bias at the logit of the training prevalence, and design
/// standardization fitted on `train` at those summary parameters.
pub fn init_params(train: &ClinicalBatch<f64>, config: &TrainConfig) -> Result<(SummaryParams<f64>, ModelParams<f64>)> {
    config.validate()?;
    let hours = train.hours();
    let sp = SummaryParams::full_window(train.n_variables(), hours, config.temperature);
    let names = feature_names(config.mode, &train.variable_names, &train.static_names, hours);
    let mut mp = ModelParams::zeros(names);
    let prevalence = train.prevalence();
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::SingleClass);
    }
    mp.bias = logit(prevalence);
    let design = design_matrix(&sp, train, config.mode)?;
    mp.standardize_to(&design)?;
    Ok((sp, mp))
}

/// First and second moment estimates over the flattened parameter vector
/// `[coeffs, bias, durations (row-major), phi_plus, phi_minus]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn for_params(sp: &SummaryParams<f64>, mp: &ModelParams<f64>) -> Self {
        Self::new(n_coefficient_params(mp) + n_summary_params(sp))
    }
}

fn n_coefficient_params(mp: &ModelParams<f64>) -> usize {
    mp.n_features() + 1
}

fn n_summary_params(sp: &SummaryParams<f64>) -> usize {
    sp.durations.len() + sp.phi_plus.len() + sp.phi_minus.len()
}

/// One Adam update of every parameter, then durations clamped to `[0, T]`.
///
/// Coefficients and bias move at `lr`; durations and thresholds at `summary_lr`.
pub fn adam_step(
    sp: &mut SummaryParams<f64>,
    mp: &mut ModelParams<f64>,
    grads: &GradientSet<f64>,
    state: &mut AdamState,
    lr: f64,
    summary_lr: f64,
    hours: usize,
) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let mut k = 0;
    let mut update = |theta: &mut f64, g: f64, rate: f64| {
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        *theta -= rate * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        k += 1;
    };
    let f = mp.n_features();
    for j in 0..f {
        update(&mut mp.coeffs[j], grads.d_coeffs[j], lr);
    }
    update(&mut mp.bias, grads.d_coeffs[f], lr);
    for (c, &g) in sp.durations.iter_mut().zip(grads.d_durations.iter()) {
        update(c, g, summary_lr);
    }
    for (p, &g) in sp.phi_plus.iter_mut().zip(&grads.d_phi_plus) {
        update(p, g, summary_lr);
    }
    for (p, &g) in sp.phi_minus.iter_mut().zip(&grads.d_phi_minus) {
        update(p, g, summary_lr);
    }
    sp.clamp(hours);
}

/// One evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_auc: f64,
    pub val_loss: f64,
    pub val_auc: f64,
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "detail")]
pub enum FitStatus {
    /// Ran to `max_epochs`.
    Completed,
    /// Validation AUC stopped improving for `patience` evaluations.
    EarlyStopped,
    /// A non-finite loss or gradient; the best parameters so far are kept.
    Aborted(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub summary_params: SummaryParams<f64>,
    pub model_params: ModelParams<f64>,
    /// Parameters at the best validation AUC.
    pub best_summary_params: SummaryParams<f64>,
    pub best_model_params: ModelParams<f64>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub history: Vec<HistoryRecord>,
    pub stopped_epoch: usize,
    pub seed: u64,
    pub status: FitStatus,
}

/// Class-weighted loss (with penalty) and AUC on a whole batch.
pub fn evaluate_fit(
    sp: &SummaryParams<f64>,
    mp: &ModelParams<f64>,
    batch: &ClinicalBatch<f64>,
    config: &TrainConfig,
) -> Result<(f64, f64)> {
    let design = design_matrix(sp, batch, config.mode)?;
    let z = logits(&design, mp)?;
    let w = class_weights::<f64>(&batch.labels)?;
    let loss =
        weighted_bce_logits(&z, &batch.labels, &w)? + config.alpha * horseshoe_penalty(&mp.coeffs, config.shrinkage);
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            block: "loss".into(),
            detail: format!("evaluation loss is {loss}"),
        });
    }
    Ok((loss, auc(&z, &batch.labels)?))
}

/// Trains from [`init_params`].
pub fn train(train: &ClinicalBatch<f64>, val: &ClinicalBatch<f64>, config: &TrainConfig) -> Result<FitResult> {
    let (sp, mp) = init_params(train, config)?;
    train_from(train, val, config, sp, mp)
}

/// Trains from the given starting point.
///
/// Each epoch shuffles the training examples with the seeded generator and
/// takes one Adam step per minibatch; class weights come from the whole
/// training set. Every `eval_interval` epochs (and at epoch 0) the full
/// training loss and the validation loss and AUC are recorded.
pub fn train_from(
    train: &ClinicalBatch<f64>,
    val: &ClinicalBatch<f64>,
    config: &TrainConfig,
    sp: SummaryParams<f64>,
    mp: ModelParams<f64>,
) -> Result<FitResult> {
    train_observed(train, val, config, sp, mp, |_, _, _| {})
}

/// [`train_from`], calling `observer` with the parameters at every evaluation
/// point (epoch 0 included) right after its history record is taken.
pub fn train_observed<F>(
    train: &ClinicalBatch<f64>,
    val: &ClinicalBatch<f64>,
    config: &TrainConfig,
    mut sp: SummaryParams<f64>,
    mut mp: ModelParams<f64>,
    mut observer: F,
) -> Result<FitResult>
where
    F: FnMut(&HistoryRecord, &SummaryParams<f64>, &ModelParams<f64>),
{
    config.validate()?;
    if train.n_variables() != val.n_variables() || train.hours() != val.hours() || train.n_static() != val.n_static() {
        return Err(Error::Shape(
            "training and validation batches have different shapes".into(),
        ));
    }
    if let Some(shared) = val.patient_ids.iter().find(|id| train.patient_ids.contains(id)) {
        return Err(Error::InvalidArgument(format!(
            "patient '{shared}' appears in both training and validation data"
        )));
    }
    let hours = train.hours();
    let weights = class_weights::<f64>(&train.labels)?;
    let lr = config.learning_rate;
    let summary_lr = match config.mode.relaxation() {
        Some(Relaxation::Relaxed) => config.summary_learning_rate.unwrap_or(lr),
        _ => 0.0,
    };
    let mut state = AdamState::for_params(&sp, &mp);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.n_examples()).collect();

    let mut history = Vec::new();
    let (train_loss, train_auc) = evaluate_fit(&sp, &mp, train, config)?;
    let (val_loss, val_auc) = evaluate_fit(&sp, &mp, val, config)?;
    history.push(HistoryRecord {
        epoch: 0,
        train_loss,
        train_auc,
        val_loss,
        val_auc,
    });
    observer(&history[0], &sp, &mp);
    let mut best = (sp.clone(), mp.clone(), 0, val_auc);
    let mut stale = 0;
    let mut status = FitStatus::Completed;
    let mut stopped_epoch = config.max_epochs;

    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let mut idx = chunk.to_vec();
            idx.sort_unstable();
            let mini = train.select(&idx);
            let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
            match loss_and_gradients(&sp, &mp, &mini, &w, config) {
                Ok((_, grads)) => adam_step(&mut sp, &mut mp, &grads, &mut state, lr, summary_lr, hours),
                Err(e) if e.is_numerical() => {
                    status = FitStatus::Aborted(format!("epoch {epoch}: {e}"));
                    stopped_epoch = epoch;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        if epoch % config.eval_interval != 0 && epoch != config.max_epochs {
            continue;
        }
        debug_assert!(sp.durations.iter().all(|&c| (0.0..=hours as f64).contains(&c)));
        let evaluated = evaluate_fit(&sp, &mp, train, config)
            .and_then(|(tl, ta)| evaluate_fit(&sp, &mp, val, config).map(|(vl, va)| (tl, ta, vl, va)));
        let (train_loss, train_auc, val_loss, val_auc) = match evaluated {
            Ok(v) => v,
            Err(e) if e.is_numerical() => {
                status = FitStatus::Aborted(format!("epoch {epoch}: {e}"));
                stopped_epoch = epoch;
                break;
            }
            Err(e) => return Err(e),
        };
        history.push(HistoryRecord {
            epoch,
            train_loss,
            train_auc,
            val_loss,
            val_auc,
        });
        observer(history.last().expect("just pushed"), &sp, &mp);
        if val_auc > best.3 {
            best = (sp.clone(), mp.clone(), epoch, val_auc);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                status = FitStatus::EarlyStopped;
                stopped_epoch = epoch;
                break;
            }
        }
    }

    let (best_summary_params, best_model_params, best_epoch, best_val_auc) = best;
    Ok(FitResult {
        summary_params: sp,
        model_params: mp,
        best_summary_params,
        best_model_params,
        best_epoch,
        best_val_auc,
        history,
        stopped_epoch,
        seed: config.seed,
        status,
    })
}
