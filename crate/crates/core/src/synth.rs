//! Seeded synthetic cohorts with planted, recoverable signals.
//!
//! Each patient has a latent acuity `z ~ N(0, 1)`. Three planted variables
//! carry it: a ramp in the last hours of the trend variable whose slope is
//! proportional to `z`, spikes above a fixed level in the last hours of the
//! threshold variable whose frequency grows with `z`, and a measurement rate
//! of the missingness variable that grows with `z`. The label is drawn from a
//! logistic model of the three statistics as they were actually observed, with
//! the intercept calibrated to a target prevalence. Every other variable is
//! AR(1) noise.

use crate::cohort::{ClinicalBatch, RawCohort, RawPatient};
use crate::error::{Error, Result};
use crate::scalar::sigmoid;
use crate::summary::functions::{frac_above_hard, indicator_mean, slope};
use crate::summary::SummaryKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// AR(1) coefficient of the background noise.
pub const AR_COEFFICIENT: f64 = 0.8;
/// Patients simulated to calibrate the intercept.
pub const PILOT_PATIENTS: usize = 10_000;
/// Bisection bracket for the intercept.
const INTERCEPT_RANGE: (f64, f64) = (-60.0, 60.0);
/// Stream offset separating pilot patients from cohort patients.
const PILOT_STREAM: u64 = 1 << 40;

/// Over its last `window` hours the trend variable ramps with slope
/// `strength · z / window` (in units of the variable's scale per hour) up to
/// a per-patient baseline `N(0, level_spread²)` at hour `T`; before the
/// window it stays flat at the ramp's starting value. The last value carries
/// no information about `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendSignal {
    pub variable: usize,
    pub window: usize,
    pub weight: f64,
    pub strength: f64,
    pub level_spread: f64,
}

/// Within the last `window` hours each hour spikes above `level` (raw units)
/// with probability `σ(gain · z − 1)`; earlier hours spike with probability
/// `σ(−1) / 2` regardless of `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSignal {
    pub variable: usize,
    pub window: usize,
    pub level: f64,
    pub weight: f64,
    pub gain: f64,
}

/// Measurement probability `p_obs · (1 + (rate_multiplier − 1) · σ(z))`, capped at 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingnessSignal {
    pub variable: usize,
    pub rate_multiplier: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_patients: usize,
    pub n_variables: usize,
    pub hours: usize,
    pub n_static: usize,
    pub prevalence: f64,
    pub trend: TrendSignal,
    pub threshold: ThresholdSignal,
    pub missingness: MissingnessSignal,
    /// Base per-hour measurement probability.
    pub p_obs: f64,
    /// Standard deviation of the AR(1) noise, in units of the variable's scale.
    pub noise_scale: f64,
    /// Standard deviation of independent per-measurement noise, same units.
    pub measurement_noise: f64,
    pub seed: u64,
}

/// Raw-unit location and scale of variable `d`.
pub fn variable_scale(d: usize) -> (f64, f64) {
    (50.0 + 10.0 * d as f64, 5.0 + d as f64)
}

impl Default for SynthSpec {
    /// Trend and threshold signals on 4,000 patients, 6 variables, 24 hours,
    /// prevalence 0.15.
    fn default() -> Self {
        let (mu1, sd1) = variable_scale(1);
        SynthSpec {
            n_patients: 4000,
            n_variables: 6,
            hours: 24,
            n_static: 2,
            prevalence: 0.15,
            trend: TrendSignal {
                variable: 0,
                window: 8,
                weight: 4.0,
                strength: 4.0,
                level_spread: 2.0,
            },
            threshold: ThresholdSignal {
                variable: 1,
                window: 6,
                level: mu1 + 1.5 * sd1,
                weight: 3.0,
                gain: 1.5,
            },
            missingness: MissingnessSignal {
                variable: 2,
                rate_multiplier: 2.0,
                weight: 0.0,
            },
            p_obs: 0.8,
            noise_scale: 0.3,
            measurement_noise: 0.8,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// The same cohort with every label weight set to zero.
    pub fn null_signal(mut self) -> Self {
        self.trend.weight = 0.0;
        self.threshold.weight = 0.0;
        self.missingness.weight = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = [self.trend.variable, self.threshold.variable, self.missingness.variable];
        if d.iter().any(|&v| v >= self.n_variables) || d[0] == d[1] || d[0] == d[2] || d[1] == d[2] {
            return Err(Error::InvalidArgument(
                "planted variables must be distinct and below n_variables".into(),
            ));
        }
        for (name, w) in [("trend", self.trend.window), ("threshold", self.threshold.window)] {
            if w < 1 || w > self.hours {
                return Err(Error::InvalidArgument(format!(
                    "{name} window must lie in [1, {}]",
                    self.hours
                )));
            }
        }
        if !(self.p_obs > 0.0 && self.p_obs <= 1.0) {
            return Err(Error::InvalidArgument("p_obs must lie in (0, 1]".into()));
        }
        if self.n_patients == 0 || self.hours < 2 {
            return Err(Error::InvalidArgument("need at least one patient and two hours".into()));
        }
        if !(self.noise_scale >= 0.0) || !(self.measurement_noise >= 0.0) || !(self.missingness.rate_multiplier >= 0.0)
        {
            return Err(Error::InvalidArgument(
                "noise scale and rate multiplier must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One feature a trained model should surface.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedFeature {
    pub variable: usize,
    pub variable_name: String,
    pub summary: SummaryKind,
    /// Planted window in hours; `None` when any window works.
    pub window: Option<usize>,
}

/// Everything needed to interpret a generated cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub intercept: f64,
    pub realized_prevalence: f64,
    pub variable_names: Vec<String>,
}

/// The (variable, summary, window) triples of every signal with non-zero weight.
pub fn describe_ground_truth(truth: &GroundTruth) -> Vec<ExpectedFeature> {
    let s = &truth.spec;
    let name = |d: usize| {
        truth
            .variable_names
            .get(d)
            .cloned()
            .unwrap_or_else(|| format!("var{d}"))
    };
    let mut out = Vec::new();
    if s.trend.weight != 0.0 {
        out.push(ExpectedFeature {
            variable: s.trend.variable,
            variable_name: name(s.trend.variable),
            summary: SummaryKind::Slope,
            window: Some(s.trend.window),
        });
    }
    if s.threshold.weight != 0.0 {
        out.push(ExpectedFeature {
            variable: s.threshold.variable,
            variable_name: name(s.threshold.variable),
            summary: SummaryKind::FracAbove,
            window: Some(s.threshold.window),
        });
    }
    if s.missingness.weight != 0.0 {
        out.push(ExpectedFeature {
            variable: s.missingness.variable,
            variable_name: name(s.missingness.variable),
            summary: SummaryKind::IndicatorMean,
            window: None,
        });
    }
    out
}

/// A generated cohort: raw series, labels, and the ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCohort {
    pub cohort: RawCohort,
    pub truth: GroundTruth,
    /// Latent acuity of each patient.
    pub acuity: Vec<f64>,
    /// Observed planted statistics `[trend slope, threshold fraction, measurement rate]` per patient.
    pub planted: Vec<[f64; 3]>,
}

impl SynthCohort {
    /// Carry-forward imputed batch in raw units (population medians over all patients).
    pub fn batch(&self) -> Result<ClinicalBatch<f64>> {
        self.cohort.impute(&self.cohort.measured_medians(None))
    }
}

pub fn variable_names(n: usize) -> Vec<String> {
    (0..n).map(|d| format!("var{d}")).collect()
}

pub fn static_names(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("static{j}")).collect()
}

struct Simulated {
    z: f64,
    series: Vec<Vec<Option<f64>>>,
    statics: Vec<f64>,
    planted: [f64; 3],
    /// Label logit without the intercept.
    score: f64,
    rng: ChaCha8Rng,
}

fn patient_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn simulate(spec: &SynthSpec, mut rng: ChaCha8Rng) -> Simulated {
    let hours = spec.hours;
    let z: f64 = rng.sample(StandardNormal);
    let innovation = (1.0 - AR_COEFFICIENT * AR_COEFFICIENT).sqrt();
    let mut series = Vec::with_capacity(spec.n_variables);
    for d in 0..spec.n_variables {
        let (mu, sd) = variable_scale(d);
        let p = if d == spec.missingness.variable {
            (spec.p_obs * (1.0 + (spec.missingness.rate_multiplier - 1.0) * sigmoid(z))).clamp(0.0, 1.0)
        } else {
            spec.p_obs
        };
        let baseline = if d == spec.trend.variable {
            spec.trend.level_spread * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let mut e: f64 = rng.sample(StandardNormal);
        let mut row = Vec::with_capacity(hours);
        for t in 1..=hours {
            if t > 1 {
                e = AR_COEFFICIENT * e + innovation * rng.sample::<f64, _>(StandardNormal);
            }
            let mut level = baseline + spec.noise_scale * e;
            if d == spec.trend.variable {
                let c = spec.trend.window as f64;
                level -= spec.trend.strength * z * ((hours - t) as f64).min(c) / c;
            }
            let jitter: f64 = rng.sample(StandardNormal);
            let mut value = mu + sd * (level + spec.measurement_noise * jitter);
            if d == spec.threshold.variable {
                let in_window = t + spec.threshold.window > hours;
                let p_spike = if in_window {
                    sigmoid(spec.threshold.gain * z - 1.0)
                } else {
                    0.5 * sigmoid(-1.0)
                };
                if rng.gen_bool(p_spike) {
                    let excess: f64 = rng.sample::<f64, _>(StandardNormal).abs();
                    value = spec.threshold.level + sd * (0.5 + 0.5 * excess);
                }
            }
            let measured = rng.gen_bool(p);
            row.push(measured.then_some(value));
        }
        series.push(row);
    }
    if series.iter().all(|s| s.iter().all(Option::is_none)) {
        // Keep every patient present in the long-format files.
        let d = (0..spec.n_variables)
            .find(|&d| d != spec.missingness.variable)
            .unwrap_or(0);
        series[d][0] = Some(variable_scale(d).0);
    }
    let statics: Vec<f64> = (0..spec.n_static)
        .map(|j| {
            if j % 2 == 0 {
                60.0 + 15.0 * rng.sample::<f64, _>(StandardNormal)
            } else if rng.gen_bool(0.5) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let planted = planted_statistics(spec, &series);
    let score =
        spec.trend.weight * planted[0] + spec.threshold.weight * planted[1] + spec.missingness.weight * planted[2];
    Simulated {
        z,
        series,
        statics,
        planted,
        score,
        rng,
    }
}

/// `[trend slope, fraction above level, measurement rate]` from the measured
/// hours, slope in scale units per hour.
pub fn planted_statistics(spec: &SynthSpec, series: &[Vec<Option<f64>>]) -> [f64; 3] {
    let hours = spec.hours;
    let window = |c: usize| -> Vec<f64> { (1..=hours).map(|t| if t + c > hours { 1.0 } else { 0.0 }).collect() };
    let unpack = |d: usize| -> (Vec<f64>, Vec<f64>) {
        let (mu, sd) = variable_scale(d);
        series[d]
            .iter()
            .map(|v| v.map_or((0.0, 0.0), |v| ((v - mu) / sd, 1.0)))
            .unzip()
    };
    let (x0, m0) = unpack(spec.trend.variable);
    let trend = slope(&x0, &m0, &window(spec.trend.window));
    let (x1, m1) = unpack(spec.threshold.variable);
    let (mu1, sd1) = variable_scale(spec.threshold.variable);
    let frac = frac_above_hard(
        &x1,
        &m1,
        &window(spec.threshold.window),
        (spec.threshold.level - mu1) / sd1,
    );
    let (_, m2) = unpack(spec.missingness.variable);
    let rate = indicator_mean(&m2, &vec![1.0; hours]);
    [trend, frac, rate]
}

fn expected_prevalence(scores: &[f64], b: f64) -> f64 {
    scores.iter().map(|&s| sigmoid(s + b)).sum::<f64>() / scores.len() as f64
}

/// Intercept whose expected prevalence over `scores` equals `target`.
fn calibrate_intercept(scores: &[f64], target: f64) -> Result<f64> {
    let (mut lo, mut hi) = INTERCEPT_RANGE;
    let (p_lo, p_hi) = (expected_prevalence(scores, lo), expected_prevalence(scores, hi));
    if !(target > p_lo && target < p_hi) {
        return Err(Error::Infeasible(format!(
            "prevalence {target} is outside the achievable range ({p_lo:.3e}, {p_hi:.6})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_prevalence(scores, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Generates a cohort. Deterministic given the spec: patient `n` draws from
/// its own stream of the seeded generator.
pub fn generate(spec: &SynthSpec) -> Result<SynthCohort> {
    spec.validate()?;
    let pilot: Vec<f64> = (0..PILOT_PATIENTS as u64)
        .into_par_iter()
        .map(|n| simulate(spec, patient_rng(spec.seed, PILOT_STREAM + n)).score)
        .collect();
    let intercept = calibrate_intercept(&pilot, spec.prevalence)?;

    let sims: Vec<(Simulated, u8)> = (0..spec.n_patients as u64)
        .into_par_iter()
        .map(|n| {
            let mut sim = simulate(spec, patient_rng(spec.seed, n));
            let p = sigmoid(sim.score + intercept);
            let label = u8::from(sim.rng.gen_bool(p));
            (sim, label)
        })
        .collect();

    let variable_names = variable_names(spec.n_variables);
    let width = spec.n_patients.to_string().len();
    let mut patients = Vec::with_capacity(sims.len());
    let mut acuity = Vec::with_capacity(sims.len());
    let mut planted = Vec::with_capacity(sims.len());
    for (n, (sim, label)) in sims.into_iter().enumerate() {
        acuity.push(sim.z);
        planted.push(sim.planted);
        patients.push(RawPatient {
            id: format!("P{n:0width$}"),
            series: sim.series,
            statics: sim.statics,
            label,
        });
    }
    let realized_prevalence = patients.iter().map(|p| p.label as f64).sum::<f64>() / patients.len() as f64;
    if realized_prevalence == 0.0 || realized_prevalence == 1.0 {
        return Err(Error::Infeasible(format!(
            "prevalence {} realized a single class over {} patients",
            spec.prevalence, spec.n_patients
        )));
    }
    Ok(SynthCohort {
        cohort: RawCohort {
            hours: spec.hours,
            variable_names: variable_names.clone(),
            static_names: static_names(spec.n_static),
            patients,
        },
        truth: GroundTruth {
            spec: spec.clone(),
            intercept,
            realized_prevalence,
            variable_names,
        },
        acuity,
        planted,
    })
}
