//! Training loss and its exact gradient with respect to coefficients, bias,
//! durations and thresholds, plus a finite-difference verification harness.

use crate::cohort::ClinicalBatch;
use crate::error::{Error, Result};
use crate::predictor::{
    design_matrix, example_loss, feature_names, fill_design_row, horseshoe_gradient, horseshoe_penalty, FeatureMode,
    ModelParams, TrainConfig,
};
use crate::scalar::{sigmoid, Scalar};
use crate::summary::functions::backward;
use crate::summary::{evaluate, window_with_derivative, Relaxation, SummaryKind, SummaryParams, NUM_SUMMARIES};
use ndarray::{Array2, Array3, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

/// Examples per parallel work unit. Fixed (not derived from the thread count)
/// so that the reduction order, and therefore every bit of the result, is the
/// same on any machine.
const CHUNK: usize = 32;

/// Partial derivatives of the training loss, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<T> {
    /// `F + 1` entries: one per design column, bias last.
    pub d_coeffs: Vec<T>,
    /// `D × I`.
    pub d_durations: Array2<T>,
    pub d_phi_plus: Vec<T>,
    pub d_phi_minus: Vec<T>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros(n_features: usize, n_variables: usize) -> Self {
        GradientSet {
            d_coeffs: vec![T::zero(); n_features + 1],
            d_durations: Array2::zeros((n_variables, NUM_SUMMARIES)),
            d_phi_plus: vec![T::zero(); n_variables],
            d_phi_minus: vec![T::zero(); n_variables],
        }
    }

    pub fn d_bias(&self) -> T {
        *self.d_coeffs.last().expect("bias entry")
    }

    /// Euclidean norm over every block.
    pub fn norm(&self) -> T {
        self.d_coeffs
            .iter()
            .chain(self.d_durations.iter())
            .chain(&self.d_phi_plus)
            .chain(&self.d_phi_minus)
            .map(|&g| g * g)
            .sum::<T>()
            .sqrt()
    }

    fn check_finite(&self) -> Result<()> {
        let blocks: [(&str, Box<dyn Iterator<Item = &T> + '_>); 5] = [
            (
                "coefficients",
                Box::new(self.d_coeffs[..self.d_coeffs.len() - 1].iter()),
            ),
            ("bias", Box::new(self.d_coeffs.last().into_iter())),
            ("durations", Box::new(self.d_durations.iter())),
            ("phi_plus", Box::new(self.d_phi_plus.iter())),
            ("phi_minus", Box::new(self.d_phi_minus.iter())),
        ];
        for (block, mut values) in blocks {
            if let Some(pos) = values.position(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    block: format!("gradient of {block}"),
                    detail: format!("entry {pos} is not finite"),
                });
            }
        }
        Ok(())
    }
}

/// Per-chunk accumulators.
struct Partial<T> {
    loss: T,
    d_coeffs: Vec<T>,
    /// `[d][i][t]`: upstream-weighted `∂summary/∂w_t`, summed over examples.
    grad_w: Vec<Vec<Vec<T>>>,
    d_phi_plus: Vec<T>,
    d_phi_minus: Vec<T>,
}

impl<T: Scalar> Partial<T> {
    fn new(f: usize, d: usize, hours: usize, relaxed: bool) -> Self {
        let t = if relaxed { hours } else { 0 };
        Partial {
            loss: T::zero(),
            d_coeffs: vec![T::zero(); f + 1],
            grad_w: vec![vec![vec![T::zero(); t]; NUM_SUMMARIES]; d],
            d_phi_plus: vec![T::zero(); d],
            d_phi_minus: vec![T::zero(); d],
        }
    }

    fn absorb(&mut self, other: &Partial<T>) {
        self.loss += other.loss;
        add_into(&mut self.d_coeffs, &other.d_coeffs);
        for (a, b) in self.grad_w.iter_mut().zip(&other.grad_w) {
            for (a, b) in a.iter_mut().zip(b) {
                add_into(a, b);
            }
        }
        add_into(&mut self.d_phi_plus, &other.d_phi_plus);
        add_into(&mut self.d_phi_minus, &other.d_phi_minus);
    }
}

fn add_into<T: Scalar>(a: &mut [T], b: &[T]) {
    a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
}

fn check_inputs<T: Scalar>(
    summary_params: &SummaryParams<T>,
    model_params: &ModelParams<T>,
    batch: &ClinicalBatch<T>,
    weights: &[T],
    config: &TrainConfig,
) -> Result<()> {
    let (n, d, hours) = batch.values.dim();
    if config.mode.relaxation().is_some() {
        summary_params.validate(d, hours)?;
    }
    let f = config.mode.n_features(d, batch.n_static(), hours);
    if model_params.n_features() != f || model_params.center.len() != f || model_params.scale.len() != f {
        return Err(Error::Shape(format!(
            "model has {} coefficients, mode {} needs {f}",
            model_params.n_features(),
            config.mode
        )));
    }
    if weights.len() != n || n == 0 {
        return Err(Error::Shape(format!(
            "{} class weights for {n} examples",
            weights.len()
        )));
    }
    Ok(())
}

/// Loss (`total_loss`) and its gradient on `batch`, with per-example class
/// weights `weights`.
///
/// Durations and thresholds only receive gradient in relaxed mode; in hard and
/// baseline modes their blocks are exactly zero. Summaries that ignore the
/// window (first/last measured) contribute nothing to `d_durations`.
pub fn loss_and_gradients<T: Scalar>(
    summary_params: &SummaryParams<T>,
    model_params: &ModelParams<T>,
    batch: &ClinicalBatch<T>,
    weights: &[T],
    config: &TrainConfig,
) -> Result<(T, GradientSet<T>)> {
    check_inputs(summary_params, model_params, batch, weights, config)?;
    let (n, n_vars, hours) = batch.values.dim();
    let mode = config.mode;
    let relaxation = mode.relaxation();
    let relaxed = relaxation == Some(Relaxation::Relaxed);
    let f = model_params.n_features();
    let inv_n = T::one() / T::from_usize_lossy(n);

    // Window columns and their derivatives, indexed [d][i].
    let (columns, d_columns): (Vec<Vec<Vec<T>>>, Vec<Vec<Vec<T>>>) = match relaxation {
        Some(relax) => {
            let w = summary_params.weights(hours, relax);
            let cols = crate::summary::weight_columns(&w, n_vars);
            let dcols = if relaxed {
                (0..n_vars)
                    .map(|d| {
                        (0..NUM_SUMMARIES)
                            .map(|i| {
                                window_with_derivative(
                                    summary_params.durations[[d, i]],
                                    hours,
                                    summary_params.temperature,
                                )
                                .1
                            })
                            .collect()
                    })
                    .collect()
            } else {
                Vec::new()
            };
            (cols, dcols)
        }
        None => (Vec::new(), Vec::new()),
    };

    let chunks: Vec<(usize, usize)> = (0..n).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(n))).collect();
    let partials: Vec<Partial<T>> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut acc = Partial::new(f, n_vars, hours, relaxed);
            let mut h = vec![T::zero(); n_vars * NUM_SUMMARIES];
            let mut row = Vec::with_capacity(f);
            let mut xs = vec![T::zero(); hours];
            let mut ms = vec![T::zero(); hours];
            for e in start..end {
                let x = batch.values.index_axis(Axis(0), e);
                let m = batch.mask.index_axis(Axis(0), e);
                if let Some(relax) = relaxation {
                    for d in 0..n_vars {
                        xs.iter_mut().zip(x.row(d)).for_each(|(a, &b)| *a = b);
                        ms.iter_mut().zip(m.row(d)).for_each(|(a, &b)| *a = b);
                        let ctx = summary_params.context(d, relax);
                        for kind in SummaryKind::ALL {
                            let i = kind.index();
                            h[d * NUM_SUMMARIES + i] = evaluate(kind, &xs, &ms, &columns[d][i], &ctx);
                        }
                    }
                }
                fill_design_row(batch, e, relaxation.map(|_| h.as_slice()), mode, &mut row);
                let z = model_params.logit_of(&row);
                let y = batch.labels[e];
                let omega = weights[e];
                acc.loss += omega * example_loss(z, y);
                let target = if y == 1 { T::one() } else { T::zero() };
                let g = omega * (sigmoid(z) - target) * inv_n;
                for j in 0..f {
                    acc.d_coeffs[j] += g * (row[j] - model_params.center[j]) / model_params.scale[j];
                }
                acc.d_coeffs[f] += g;
                if !relaxed {
                    continue;
                }
                for d in 0..n_vars {
                    xs.iter_mut().zip(x.row(d)).for_each(|(a, &b)| *a = b);
                    ms.iter_mut().zip(m.row(d)).for_each(|(a, &b)| *a = b);
                    let ctx = summary_params.context(d, Relaxation::Relaxed);
                    for kind in SummaryKind::ALL {
                        let i = kind.index();
                        let j = d * NUM_SUMMARIES + i;
                        let upstream = g * model_params.coeffs[j] / model_params.scale[j];
                        let d_phi = backward(kind, &xs, &ms, &columns[d][i], &ctx, upstream, &mut acc.grad_w[d][i]);
                        match kind {
                            SummaryKind::FracAbove => acc.d_phi_plus[d] += d_phi,
                            SummaryKind::FracBelow => acc.d_phi_minus[d] += d_phi,
                            _ => {}
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = Partial::new(f, n_vars, hours, relaxed);
    for p in &partials {
        total.absorb(p);
    }

    let alpha = T::lit(config.alpha);
    let shrinkage = T::lit(config.shrinkage);
    let loss = total.loss * inv_n + alpha * horseshoe_penalty(&model_params.coeffs, shrinkage);
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            block: "loss".into(),
            detail: format!("training loss evaluated to {loss}"),
        });
    }
    let mut grads = GradientSet::zeros(f, n_vars);
    grads.d_coeffs = total.d_coeffs;
    if alpha != T::zero() {
        for (gj, &bj) in grads.d_coeffs.iter_mut().zip(&model_params.coeffs) {
            *gj += alpha * horseshoe_gradient(bj, shrinkage);
        }
    }
    if relaxed {
        for d in 0..n_vars {
            for kind in SummaryKind::ALL.into_iter().filter(|k| k.is_windowed()) {
                let i = kind.index();
                grads.d_durations[[d, i]] = total.grad_w[d][i]
                    .iter()
                    .zip(&d_columns[d][i])
                    .map(|(&a, &b)| a * b)
                    .sum();
            }
        }
        grads.d_phi_plus = total.d_phi_plus;
        grads.d_phi_minus = total.d_phi_minus;
    }
    grads.check_finite()?;
    Ok((loss, grads))
}

/// Loss only; the same scalar [`loss_and_gradients`] differentiates.
pub fn loss_only<T: Scalar>(
    summary_params: &SummaryParams<T>,
    model_params: &ModelParams<T>,
    batch: &ClinicalBatch<T>,
    weights: &[T],
    config: &TrainConfig,
) -> Result<T> {
    check_inputs(summary_params, model_params, batch, weights, config)?;
    crate::predictor::total_loss(summary_params, model_params, batch, weights, config)
}

/// One compared parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FdEntry {
    pub parameter: String,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

/// Outcome of [`finite_difference_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FdReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub entries: Vec<FdEntry>,
}

impl FdReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Which scalar parameter a check perturbs.
#[derive(Clone, Copy, Debug)]
enum Coordinate {
    Coeff(usize),
    Duration(usize, usize),
    PhiPlus(usize),
    PhiMinus(usize),
}

/// Compares analytic derivatives against central differences for every
/// duration and threshold and `n_coeff_samples` seeded coefficients (the bias
/// included as a candidate). Durations within `eps` of 0 or `T` use the
/// second-order one-sided stencil so the loss is never evaluated outside `[0, T]`.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_check(
    summary_params: &SummaryParams<f64>,
    model_params: &ModelParams<f64>,
    batch: &ClinicalBatch<f64>,
    weights: &[f64],
    config: &TrainConfig,
    eps: f64,
    n_coeff_samples: usize,
    seed: u64,
) -> Result<FdReport> {
    finite_difference_check_with(
        summary_params,
        model_params,
        batch,
        weights,
        config,
        eps,
        n_coeff_samples,
        seed,
        |_| {},
    )
}

/// [`finite_difference_check`] with `tamper` applied to the analytic gradients
/// before comparison; used to confirm the check catches a corrupted gradient.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_check_with<F>(
    summary_params: &SummaryParams<f64>,
    model_params: &ModelParams<f64>,
    batch: &ClinicalBatch<f64>,
    weights: &[f64],
    config: &TrainConfig,
    eps: f64,
    n_coeff_samples: usize,
    seed: u64,
    tamper: F,
) -> Result<FdReport>
where
    F: FnOnce(&mut GradientSet<f64>),
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let (_, mut grads) = loss_and_gradients(summary_params, model_params, batch, weights, config)?;
    tamper(&mut grads);
    let f = model_params.n_features();
    let n_vars = batch.n_variables();
    let hours = batch.hours() as f64;

    let mut coords = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, f + 1, n_coeff_samples.min(f + 1)).into_vec();
    picked.sort_unstable();
    coords.extend(picked.into_iter().map(Coordinate::Coeff));
    if config.mode.relaxation() == Some(Relaxation::Relaxed) {
        for d in 0..n_vars {
            coords.extend((0..NUM_SUMMARIES).map(|i| Coordinate::Duration(d, i)));
        }
        coords.extend((0..n_vars).map(Coordinate::PhiPlus));
        coords.extend((0..n_vars).map(Coordinate::PhiMinus));
    }

    let eval = |coord: Coordinate, value: f64| -> Result<f64> {
        let mut sp = summary_params.clone();
        let mut mp = model_params.clone();
        match coord {
            Coordinate::Coeff(j) if j == f => mp.bias = value,
            Coordinate::Coeff(j) => mp.coeffs[j] = value,
            Coordinate::Duration(d, i) => sp.durations[[d, i]] = value,
            Coordinate::PhiPlus(d) => sp.phi_plus[d] = value,
            Coordinate::PhiMinus(d) => sp.phi_minus[d] = value,
        }
        loss_only(&sp, &mp, batch, weights, config)
    };

    let entries = coords
        .par_iter()
        .map(|&coord| -> Result<FdEntry> {
            let (name, theta, analytic) = match coord {
                Coordinate::Coeff(j) if j == f => ("bias".to_string(), model_params.bias, grads.d_coeffs[j]),
                Coordinate::Coeff(j) => (
                    format!(
                        "coeff[{}]",
                        model_params.feature_names.get(j).map_or("?", |s| s.as_str())
                    ),
                    model_params.coeffs[j],
                    grads.d_coeffs[j],
                ),
                Coordinate::Duration(d, i) => (
                    format!("C[{}:{}]", batch.variable_names[d], SummaryKind::ALL[i]),
                    summary_params.durations[[d, i]],
                    grads.d_durations[[d, i]],
                ),
                Coordinate::PhiPlus(d) => (
                    format!("phi_plus[{}]", batch.variable_names[d]),
                    summary_params.phi_plus[d],
                    grads.d_phi_plus[d],
                ),
                Coordinate::PhiMinus(d) => (
                    format!("phi_minus[{}]", batch.variable_names[d]),
                    summary_params.phi_minus[d],
                    grads.d_phi_minus[d],
                ),
            };
            let numeric = match coord {
                Coordinate::Duration(..) if theta + eps > hours => {
                    let (f0, f1, f2) = (
                        eval(coord, theta)?,
                        eval(coord, theta - eps)?,
                        eval(coord, theta - 2.0 * eps)?,
                    );
                    (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * eps)
                }
                Coordinate::Duration(..) if theta - eps < 0.0 => {
                    let (f0, f1, f2) = (
                        eval(coord, theta)?,
                        eval(coord, theta + eps)?,
                        eval(coord, theta + 2.0 * eps)?,
                    );
                    (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * eps)
                }
                _ => (eval(coord, theta + eps)? - eval(coord, theta - eps)?) / (2.0 * eps),
            };
            Ok(FdEntry {
                parameter: name,
                analytic,
                numeric,
                relative_error: relative_error(analytic, numeric),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (max_relative_error, worst_parameter) = entries.iter().fold((0.0, String::new()), |(best, name), e| {
        if e.relative_error > best {
            (e.relative_error, e.parameter.clone())
        } else {
            (best, name)
        }
    });
    Ok(FdReport {
        max_relative_error,
        worst_parameter,
        entries,
    })
}

/// A random normalized batch for gradient checks: standard-normal values and
/// statics, each hour measured with probability 0.6, alternating labels.
pub fn random_batch(n: usize, d: usize, p: usize, hours: usize, seed: u64) -> ClinicalBatch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array3::from_shape_fn((n, d, hours), |_| rng.sample::<f64, _>(StandardNormal));
    let mask = Array3::from_shape_fn((n, d, hours), |_| if rng.gen_bool(0.6) { 1.0 } else { 0.0 });
    let statics = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let labels = (0..n).map(|i| (i % 2) as u8).collect();
    ClinicalBatch::new(
        values,
        mask,
        statics,
        labels,
        (0..n).map(|i| format!("p{i}")).collect(),
        (0..d).map(|i| format!("v{i}")).collect(),
        (0..p).map(|i| format!("s{i}")).collect(),
    )
    .expect("shapes are consistent by construction")
}

/// Random parameters away from the trivial starting point: durations in
/// `[0.5, T − 0.5]`, `φ+ ∈ [0, 1]`, `φ− ∈ [−1, 0]`, coefficients in `[−1, 1]`,
/// with design standardization fitted on `batch`.
pub fn random_parameters(
    batch: &ClinicalBatch<f64>,
    mode: FeatureMode,
    temperature: f64,
    seed: u64,
) -> Result<(SummaryParams<f64>, ModelParams<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, hours) = (batch.n_variables(), batch.hours());
    let mut sp = SummaryParams::full_window(d, hours, temperature);
    let upper = (hours as f64 - 0.5).max(0.5);
    sp.durations.mapv_inplace(|_| rng.gen_range(0.5..=upper));
    sp.phi_plus.iter_mut().for_each(|p| *p = rng.gen_range(0.0..1.0));
    sp.phi_minus.iter_mut().for_each(|p| *p = rng.gen_range(-1.0..0.0));
    let names = feature_names(mode, &batch.variable_names, &batch.static_names, hours);
    let mut mp = ModelParams::zeros(names);
    mp.coeffs.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..1.0));
    mp.bias = rng.gen_range(-0.5..0.5);
    let design = design_matrix(&sp, batch, mode)?;
    mp.standardize_to(&design)?;
    Ok((sp, mp))
}
