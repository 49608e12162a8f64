//! Acceptance suite: nine end-to-end criteria, each printed as one PASS/FAIL
//! line. Runs without the libtest harness; the process exits non-zero when any
//! criterion fails.
//!
//! Criteria 5–7 and 9 train on the default synthetic cohort (4,000 patients,
//! six variables, 24 hours, prevalence 0.15), regenerated per seed.

use hsumm::evaluator::{ablation_curve, gini, key_feature_report};
use hsumm::grad::{finite_difference_check, random_batch, random_parameters};
use hsumm::pipeline::{mean_and_se, model_auc, run_seed, SeedRun};
use hsumm::summary::functions::{
    ever_measured, first_measured, frac_above, frac_below, indicator_mean, indicator_variance, last_measured, mean,
    slope, slope_stderr, switch_count, variance,
};
use hsumm::summary::{compute_summary_tensor, compute_weights, compute_weights_hard};
use hsumm::synth::{describe_ground_truth, generate, SynthSpec};
use hsumm::trainer::{init_params, train_observed};
use hsumm::NUM_SUMMARIES;
use hsumm::{class_weights, ClinicalBatch, FeatureMode, Relaxation, SummaryKind, SummaryParams, TrainConfig};
use hsumm_cli::config::RunConfig;
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::time::{Duration, Instant};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const TEST_FRACTION: f64 = 0.2;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

fn main() {
    // `cargo test` passes libtest flags such as `--nocapture`; a filter
    // argument selects criteria by number.
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wants = |n: usize| selected.is_empty() || selected.contains(&n);

    let mut trained: Option<Vec<ModeRuns>> = None;
    let need_runs = |trained: &mut Option<Vec<ModeRuns>>| {
        if trained.is_none() {
            *trained = Some(SEEDS.iter().map(|&s| ModeRuns::train(s)).collect());
        }
    };

    let mut results: Vec<(usize, &str, Verdict, Duration)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        if !wants(n) {
            return;
        }
        let start = Instant::now();
        let verdict = f();
        let elapsed = start.elapsed();
        println!(
            "{} {n}. {name}: {} [{:.1}s]",
            if verdict.pass { "PASS" } else { "FAIL" },
            verdict.detail,
            elapsed.as_secs_f64()
        );
        results.push((n, name, verdict, elapsed));
    };

    run(1, "gradient correctness", &mut gradient_correctness);
    run(2, "relaxation limit", &mut relaxation_limit);
    run(3, "window consistency", &mut window_consistency);
    run(4, "per-formula oracles", &mut formula_oracles);
    run(5, "synthetic recovery", &mut || {
        need_runs(&mut trained);
        synthetic_recovery(trained.as_ref().unwrap())
    });
    run(6, "ablation curve", &mut || {
        need_runs(&mut trained);
        ablation(trained.as_ref().unwrap())
    });
    run(7, "sparsity", &mut || {
        need_runs(&mut trained);
        sparsity(trained.as_ref().unwrap())
    });
    run(8, "determinism", &mut determinism);
    run(9, "null-signal control", &mut null_signal);

    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Shared training runs for criteria 5–7.

fn acceptance_config(mode: FeatureMode, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        learning_rate: 1e-2,
        summary_learning_rate: Some(0.1),
        batch_size: 256,
        max_epochs: 400,
        eval_interval: 10,
        patience: 40,
        alpha: 1e-2,
        shrinkage: 1.0,
        temperature: 0.1,
        validation_fraction: 0.15,
        seed,
        ..Default::default()
    }
}

struct ModeRuns {
    seed: u64,
    spec: SynthSpec,
    truth: hsumm::synth::GroundTruth,
    relaxed: SeedRun,
    hard: SeedRun,
    top: SeedRun,
}

impl ModeRuns {
    fn train(seed: u64) -> Self {
        let start = Instant::now();
        let spec = SynthSpec {
            seed,
            ..Default::default()
        };
        let g = generate(&spec).expect("default cohort generates");
        let fit = |mode| run_seed(&g.cohort, &acceptance_config(mode, seed), TEST_FRACTION).expect("training runs");
        let runs = ModeRuns {
            seed,
            relaxed: fit(FeatureMode::Relaxed),
            hard: fit(FeatureMode::Hard),
            top: fit(FeatureMode::TimeOfPredictionOnly),
            truth: g.truth,
            spec,
        };
        eprintln!(
            "  seed {seed}: relaxed {:.4}  hard {:.4}  time-of-prediction {:.4} [{:.0}s]",
            runs.relaxed.metrics.test_auc,
            runs.hard.metrics.test_auc,
            runs.top.metrics.test_auc,
            start.elapsed().as_secs_f64()
        );
        runs
    }
}

fn mean_of(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    mean_and_se(&v).0
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness.

fn gradient_correctness() -> Verdict {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for seed in 0..5u64 {
        let batch = random_batch(8, 3, 2, 12, seed);
        let weights = class_weights::<f64>(&batch.labels).unwrap();
        let config = TrainConfig {
            mode: FeatureMode::Relaxed,
            alpha: 1e-2,
            seed,
            ..Default::default()
        };
        let (sp, mp) = random_parameters(&batch, FeatureMode::Relaxed, 0.1, seed).unwrap();
        let report = finite_difference_check(&sp, &mp, &batch, &weights, &config, 1e-5, 32, seed).unwrap();
        checked += report.entries.len();
        if report.max_relative_error > worst.0 {
            worst = (
                report.max_relative_error,
                format!("seed {seed} {}", report.worst_parameter),
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Verdict::new(
        worst.0 < 1e-4 && elapsed < 10.0,
        format!(
            "5 batches (N=8, D=3, T=12), {checked} parameters; max relative error {:.2e} ({}) < 1e-4; {elapsed:.2}s < 10s",
            worst.0, worst.1
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Relaxed summaries at τ = 1e-4 against hard summaries.

fn relaxation_limit() -> Verdict {
    const TAU: f64 = 1e-4;
    const MARGIN: f64 = 14.0 * TAU;
    let (n_vars, hours) = (3, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = (0.0f64, String::new());
    let mut exceeding = 0;
    for fixture in 0..1000 {
        let batch = random_fixture(&mut rng, 1, n_vars, hours);
        // Durations whose window edge stays at least 14τ from every hour.
        let durations = Array2::from_shape_fn((n_vars, NUM_SUMMARIES), |_| loop {
            let c: f64 = rng.gen_range(0.0..=hours as f64);
            if (1..=hours).all(|t| (t as f64 - hours as f64 + c).abs() >= MARGIN) {
                break c;
            }
        });
        // Thresholds at least 14τ from every value of their variable.
        let mut pick = |d: usize| loop {
            let phi: f64 = rng.gen_range(-2.0..2.0);
            if batch
                .values
                .slice(ndarray::s![0, d, ..])
                .iter()
                .all(|&x| (x - phi).abs() >= MARGIN)
            {
                break phi;
            }
        };
        let phi_plus: Vec<f64> = (0..n_vars).map(&mut pick).collect();
        let phi_minus: Vec<f64> = (0..n_vars).map(&mut pick).collect();
        let params = SummaryParams {
            durations,
            phi_plus,
            phi_minus,
            temperature: TAU,
        };
        let soft = compute_summary_tensor(&batch, &params, Relaxation::Relaxed).unwrap();
        let hard = compute_summary_tensor(&batch, &params, Relaxation::Hard).unwrap();
        if soft
            .values
            .iter()
            .zip(hard.values.iter())
            .any(|(a, b)| (a - b).abs() > 1e-6)
        {
            exceeding += 1;
        }
        for ((idx, &a), &b) in soft.values.indexed_iter().zip(hard.values.iter()) {
            let err = (a - b).abs();
            if err > worst.0 || worst.1.is_empty() {
                worst = (
                    err,
                    format!("fixture {fixture}, variable {}, {}", idx.1, SummaryKind::ALL[idx.2]),
                );
            }
        }
    }
    // A weight leaking σ(−14) ≈ 8.3e-7 into the window moves weighted means by
    // that much times a value spread, and 1/Σv(t − t̄)² by its square, so a
    // window edge just past the margin can exceed 1e-6.
    Verdict::new(
        exceeding == 0,
        format!(
            "1000 fixtures, {} summaries each; max |relaxed − hard| {:.2e} ({}) ≤ 1e-6; {exceeding} fixtures over",
            n_vars * NUM_SUMMARIES,
            worst.0,
            worst.1
        ),
    )
}

/// One example per row: standard-normal values, 70 % measured, labels alternating.
fn random_fixture(rng: &mut ChaCha8Rng, n: usize, n_vars: usize, hours: usize) -> ClinicalBatch<f64> {
    let values = Array3::from_shape_fn((n, n_vars, hours), |_| rng.sample::<f64, _>(StandardNormal));
    let mask = Array3::from_shape_fn((n, n_vars, hours), |_| if rng.gen_bool(0.7) { 1.0 } else { 0.0 });
    batch_of(values, mask)
}

fn batch_of(values: Array3<f64>, mask: Array3<f64>) -> ClinicalBatch<f64> {
    let (n, d, _) = values.dim();
    ClinicalBatch::new(
        values,
        mask,
        Array2::zeros((n, 0)),
        (0..n).map(|i| (i % 2) as u8).collect(),
        (0..n).map(|i| format!("p{i}")).collect(),
        (0..d).map(|i| format!("v{i}")).collect(),
        vec![],
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// 3. Hard windows against truncated series.

fn window_consistency() -> Verdict {
    let (n_vars, hours) = (2, 24);
    let kinds = [
        SummaryKind::Mean,
        SummaryKind::Variance,
        SummaryKind::FracAbove,
        SummaryKind::FracBelow,
        SummaryKind::Slope,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = (0.0f64, String::new());
    for fixture in 0..200 {
        let batch = random_fixture(&mut rng, 1, n_vars, hours);
        let c = rng.gen_range(1..=hours);
        let phi_plus: Vec<f64> = (0..n_vars).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let phi_minus: Vec<f64> = (0..n_vars).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let windowed = SummaryParams {
            durations: Array2::from_elem((n_vars, NUM_SUMMARIES), c as f64),
            phi_plus: phi_plus.clone(),
            phi_minus: phi_minus.clone(),
            temperature: 0.1,
        };
        let truncated_params = SummaryParams {
            durations: Array2::from_elem((n_vars, NUM_SUMMARIES), c as f64),
            phi_plus,
            phi_minus,
            temperature: 0.1,
        };
        let tail = ndarray::s![.., .., hours - c..];
        let truncated = batch_of(batch.values.slice(tail).to_owned(), batch.mask.slice(tail).to_owned());
        let full = compute_summary_tensor(&batch, &windowed, Relaxation::Hard).unwrap();
        let cut = compute_summary_tensor(&truncated, &truncated_params, Relaxation::Hard).unwrap();
        for d in 0..n_vars {
            for kind in kinds {
                let i = kind.index();
                let err = (full.values[[0, d, i]] - cut.values[[0, d, i]]).abs();
                if err > worst.0 || worst.1.is_empty() {
                    worst = (err, format!("fixture {fixture}, C = {c}, {kind}"));
                }
            }
        }
    }
    Verdict::new(
        worst.0 <= 1e-12,
        format!(
            "200 fixtures (T=24, D=2) for mean, variance, frac_above, frac_below, slope; max difference {:.2e} ({}) ≤ 1e-12",
            worst.0, worst.1
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Worked examples against independent oracles.

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn unbiased_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (st, sx) = points.iter().fold((0.0, 0.0), |(a, b), &(t, x)| (a + t, b + x));
    let (tbar, xbar) = (st / n, sx / n);
    let num: f64 = points.iter().map(|&(t, x)| (t - tbar) * (x - xbar)).sum();
    let den: f64 = points.iter().map(|&(t, _)| (t - tbar) * (t - tbar)).sum();
    num / den
}

fn inverse_spread(ts: &[f64]) -> f64 {
    let tbar = ts.iter().sum::<f64>() / ts.len() as f64;
    1.0 / ts.iter().map(|t| (t - tbar) * (t - tbar)).sum::<f64>()
}

fn formula_oracles() -> Verdict {
    let a_x = [1.0, 2.0, 3.0, 4.0];
    let ones = [1.0; 4];
    let b_w = [0.0, 0.0, 1.0, 1.0];
    let c_m = [1.0, 0.0, 1.0, 1.0];
    let zeros = [0.0; 4];
    let tau = 0.1;

    let mut cases: Vec<(&str, f64, f64)> = Vec::new();
    let w = |c: f64, hours: usize, t: usize| {
        compute_weights(&Array2::from_elem((1, 1), c), hours, tau).weights[[t - 1, 0, 0]]
    };
    cases.push(("weights C=T=24, t=1", w(24.0, 24, 1), logistic(10.0)));
    cases.push(("weights C=0, t=T", w(0.0, 24, 24), 0.5));
    cases.push(("weights C=12, t=6", w(12.0, 24, 6), logistic(-60.0)));
    let hard = |c: f64| compute_weights_hard(&Array2::from_elem((1, 1), c), 4).column(0, 0);
    for (t, expected) in [0.0, 0.0, 1.0, 1.0].into_iter().enumerate() {
        cases.push(("hard weights C=2, T=4", hard(2.0)[t], expected));
        cases.push(("hard weights C=T", hard(4.0)[t], 1.0));
        cases.push(("hard weights C=0", hard(0.0)[t], 0.0));
    }

    cases.push(("mean A", mean(&a_x, &ones, &ones), 10.0 / 4.0));
    cases.push(("mean B", mean(&a_x, &ones, &b_w), 7.0 / 2.0));
    cases.push(("mean Cfx", mean(&a_x, &c_m, &ones), (1.0 + 3.0 + 4.0) / 3.0));

    cases.push(("variance A", variance(&a_x, &ones, &ones), unbiased_variance(&a_x)));
    cases.push(("variance constant", variance(&[3.0; 4], &ones, &ones), 0.0));
    cases.push((
        "variance B",
        variance(&a_x, &ones, &b_w),
        unbiased_variance(&[3.0, 4.0]),
    ));

    cases.push(("ever_measured none", ever_measured(&zeros, &ones, tau), 0.5));
    cases.push((
        "ever_measured A",
        ever_measured(&ones, &ones, tau),
        logistic(4.0 / (tau * 4.0)),
    ));
    cases.push((
        "ever_measured Cfx",
        ever_measured(&c_m, &ones, tau),
        logistic(3.0 / (tau * 4.0)),
    ));

    cases.push(("indicator_mean A", indicator_mean(&ones, &ones), 1.0));
    cases.push(("indicator_mean Cfx", indicator_mean(&c_m, &ones), 3.0 / 4.0));
    cases.push(("indicator_mean windowed", indicator_mean(&c_m, &b_w), 1.0));

    let alternating = [1.0, 0.0, 1.0, 0.0];
    cases.push(("indicator_variance constant", indicator_variance(&ones, &ones), 0.0));
    cases.push((
        "indicator_variance alternating",
        indicator_variance(&alternating, &ones),
        unbiased_variance(&alternating),
    ));
    cases.push((
        "indicator_variance windowed",
        indicator_variance(&[1.0, 1.0, 1.0, 0.0], &b_w),
        unbiased_variance(&[1.0, 0.0]),
    ));

    cases.push(("switch_count constant", switch_count(&ones, &ones), 0.0));
    cases.push(("switch_count alternating", switch_count(&alternating, &ones), 3.0 / 4.0));
    cases.push(("switch_count late", switch_count(&b_w, &ones), 1.0 / 4.0));

    cases.push(("first_measured late", first_measured(&b_w), 3.0 / 4.0));
    cases.push(("last_measured late", last_measured(&b_w), 4.0 / 4.0));
    cases.push(("first_measured all", first_measured(&ones), 1.0 / 4.0));
    cases.push(("last_measured all", last_measured(&ones), 4.0 / 4.0));
    cases.push(("first_measured none", first_measured(&zeros), 1.0));
    cases.push(("last_measured none", last_measured(&zeros), 0.0));

    let step = [0.0, 0.0, 10.0, 10.0];
    cases.push((
        "frac_above step",
        frac_above(&step, &ones, &ones, 5.0, tau),
        (2.0 * logistic(-50.0) + 2.0 * logistic(50.0)) / 4.0,
    ));
    cases.push((
        "frac_above saturated",
        frac_above(&[100.0; 4], &ones, &ones, 5.0, tau),
        logistic(950.0),
    ));
    cases.push((
        "frac_above on threshold",
        frac_above(&[5.0; 4], &ones, &ones, 5.0, tau),
        0.5,
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mirror = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let m: Vec<f64> = (0..6).map(|_| if rng.gen_bool(0.7) { 1.0 } else { 0.0 }).collect();
        let w: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let phi: f64 = rng.gen_range(-1.0..1.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        mirror = mirror.max((frac_below(&x, &m, &w, phi, tau) - frac_above(&neg, &m, &w, -phi, tau)).abs());
    }
    cases.push(("frac_below mirrors frac_above", mirror, 0.0));
    cases.push((
        "frac_below on threshold",
        frac_below(&[5.0; 4], &ones, &ones, 5.0, tau),
        0.5,
    ));
    cases.push((
        "frac_below step",
        frac_below(&[10.0, 10.0, 0.0, 0.0], &ones, &ones, 5.0, tau),
        (2.0 * logistic(-50.0) + 2.0 * logistic(50.0)) / 4.0,
    ));

    let a_points: Vec<(f64, f64)> = (1..=4).map(|t| (t as f64, t as f64)).collect();
    cases.push(("slope A", slope(&a_x, &ones, &ones), ols_slope(&a_points)));
    cases.push(("slope constant", slope(&[2.0; 4], &ones, &ones), 0.0));
    cases.push((
        "slope B",
        slope(&a_x, &ones, &b_w),
        ols_slope(&[(3.0, 3.0), (4.0, 4.0)]),
    ));

    cases.push((
        "slope_stderr A",
        slope_stderr(&a_x, &ones, &ones),
        inverse_spread(&[1.0, 2.0, 3.0, 4.0]),
    ));
    cases.push((
        "slope_stderr B",
        slope_stderr(&a_x, &ones, &b_w),
        inverse_spread(&[3.0, 4.0]),
    ));
    cases.push((
        "slope_stderr single point",
        slope_stderr(&a_x, &[0.0, 0.0, 1.0, 0.0], &ones),
        1e8,
    ));

    // Whole-tensor composition on fixture A with full windows.
    let a = batch_of(
        Array3::from_shape_vec((1, 1, 4), a_x.to_vec()).unwrap(),
        Array3::from_elem((1, 1, 4), 1.0),
    );
    let params = SummaryParams {
        durations: Array2::from_elem((1, NUM_SUMMARIES), 4.0),
        phi_plus: vec![2.5],
        phi_minus: vec![1.5],
        temperature: tau,
    };
    // Full-window relaxed weights are σ((t − 4 + 4)/τ) = σ(10 t), not exactly 1.
    let wf: Vec<f64> = (1..=4).map(|t| logistic(t as f64 / tau)).collect();
    let sw: f64 = wf.iter().sum();
    let wmean = wf.iter().zip(&a_x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let wsq: f64 = wf.iter().map(|w| w * w).sum();
    let wvar = wf
        .iter()
        .zip(&a_x)
        .map(|(w, x)| w * (x - wmean) * (x - wmean))
        .sum::<f64>()
        * sw
        / (sw * sw - wsq);
    let wtslope = {
        let tbar = wf.iter().enumerate().map(|(t, w)| w * (t + 1) as f64).sum::<f64>() / sw;
        let den: f64 = wf
            .iter()
            .enumerate()
            .map(|(t, w)| w * ((t + 1) as f64 - tbar).powi(2))
            .sum();
        let num: f64 = wf
            .iter()
            .enumerate()
            .map(|(t, w)| w * ((t + 1) as f64 - tbar) * (a_x[t] - wmean))
            .sum();
        (num / den, 1.0 / den)
    };
    let above = wf
        .iter()
        .zip(&a_x)
        .map(|(w, x)| w * logistic((x - 2.5) / tau))
        .sum::<f64>()
        / sw;
    let below = wf
        .iter()
        .zip(&a_x)
        .map(|(w, x)| w * logistic((1.5 - x) / tau))
        .sum::<f64>()
        / sw;
    let expected = [
        wmean,
        wvar,
        logistic(sw / (tau * sw)),
        1.0,
        0.0,
        0.0,
        0.25,
        1.0,
        above,
        below,
        wtslope.0,
        wtslope.1,
    ];
    let relaxed = compute_summary_tensor(&a, &params, Relaxation::Relaxed).unwrap();
    for kind in SummaryKind::ALL {
        cases.push((
            kind.name(),
            relaxed.values[[0, 0, kind.index()]],
            expected[kind.index()],
        ));
    }
    // Hard mode: exactly the per-operation values of fixture A, whatever τ.
    let hard_expected = [2.5, 5.0 / 3.0, 1.0, 1.0, 0.0, 0.0, 0.25, 1.0, 0.5, 0.25, 1.0, 0.2];
    for temperature in [1e-3, 0.1, 10.0] {
        let h = compute_summary_tensor(
            &a,
            &SummaryParams {
                temperature,
                ..params.clone()
            },
            Relaxation::Hard,
        )
        .unwrap();
        for kind in SummaryKind::ALL {
            cases.push((kind.name(), h.values[[0, 0, kind.index()]], hard_expected[kind.index()]));
        }
    }

    let mut worst = (0.0f64, "");
    for &(name, got, want) in &cases {
        // The 1/ε cap is compared relative to its size.
        let err = (got - want).abs() / want.abs().max(1.0);
        if !(err <= worst.0) {
            worst = (err, name);
        }
    }
    Verdict::new(
        worst.0 <= 1e-9,
        format!(
            "{} worked values; max error {:.2e} ({}) ≤ 1e-9",
            cases.len(),
            worst.0,
            worst.1
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Recovery of the planted signals.

fn synthetic_recovery(runs: &[ModeRuns]) -> Verdict {
    let relaxed: Vec<f64> = runs.iter().map(|r| r.relaxed.metrics.test_auc).collect();
    let hard: Vec<f64> = runs.iter().map(|r| r.hard.metrics.test_auc).collect();
    let top: Vec<f64> = runs.iter().map(|r| r.top.metrics.test_auc).collect();
    let (mr, mh, mt) = (mean_of(relaxed.clone()), mean_of(hard.clone()), mean_of(top.clone()));

    let mut in_top5 = 0;
    let mut near_window = 0;
    let mut learned = Vec::new();
    for r in runs {
        let planted = describe_ground_truth(&r.truth)
            .into_iter()
            .find(|f| f.summary == SummaryKind::Slope)
            .expect("trend signal is planted");
        let sp = &r.relaxed.fit.best_summary_params;
        let rows = key_feature_report(
            sp,
            &r.relaxed.fit.best_model_params,
            FeatureMode::Relaxed,
            &r.relaxed.data.train.variable_names,
            &r.relaxed.data.train.static_names,
            r.spec.hours,
            &r.relaxed.data.stats,
            5,
        )
        .unwrap();
        if rows
            .iter()
            .any(|row| row.variable == planted.variable_name && row.summary == planted.summary.name())
        {
            in_top5 += 1;
        }
        let c = sp.durations[[planted.variable, SummaryKind::Slope.index()]];
        learned.push(c);
        if (c - planted.window.expect("trend has a window") as f64).abs() <= 3.0 {
            near_window += 1;
        }
    }
    let a = mr >= 0.85;
    let b = mr >= mh - 0.005 && mr - mt >= 0.03;
    let c = in_top5 >= 4;
    let d = near_window >= 3;
    Verdict::new(
        a && b && c && d,
        format!(
            "(a) relaxed mean test AUC {mr:.4} ≥ 0.85 [{}]; (b) hard {mh:.4} − 0.005 ≤ relaxed, relaxed − time-of-prediction {mt:.4} = {:.4} ≥ 0.03 [{}]; \
             (c) planted (var0, slope) in top 5 for {in_top5}/5 seeds [{}]; (d) learned slope window within 3 h of {} h for {near_window}/5 seeds (C = {}) [{}]; \
             relaxed per seed {}",
            ok(a),
            mr - mt,
            ok(b),
            ok(c),
            runs[0].spec.trend.window,
            learned.iter().map(|c| format!("{c:.2}")).collect::<Vec<_>>().join(", "),
            ok(d),
            fmt_list(&relaxed),
        ),
    )
}

fn ok(pass: bool) -> &'static str {
    if pass {
        "ok"
    } else {
        "failed"
    }
}

// ---------------------------------------------------------------------------
// 6. Top-15 ablation against the full time-of-prediction baseline.

fn ablation(runs: &[ModeRuns]) -> Verdict {
    let top15: Vec<f64> = runs
        .iter()
        .map(|r| {
            let fit = &r.relaxed.fit;
            ablation_curve(
                &fit.best_summary_params,
                &fit.best_model_params,
                FeatureMode::Relaxed,
                &r.relaxed.data.test,
                &[15],
            )
            .unwrap()[0]
                .1
        })
        .collect();
    let baseline: Vec<f64> = runs.iter().map(|r| r.top.metrics.test_auc).collect();
    let (m15, mb) = (mean_of(top15.clone()), mean_of(baseline.clone()));
    let wins = top15.iter().zip(&baseline).filter(|(a, b)| a >= b).count();
    Verdict::new(
        m15 >= mb,
        format!(
            "mean top-15 relaxed test AUC {m15:.4} ≥ time-of-prediction baseline {mb:.4} (per seed {} vs {}; ahead in {wins}/5)",
            fmt_list(&top15),
            fmt_list(&baseline)
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Horseshoe vs unpenalized coefficient concentration at matched train AUC.

fn sparsity(runs: &[ModeRuns]) -> Verdict {
    let mut passes = 0;
    let mut lines = Vec::new();
    for r in runs {
        let target = r.relaxed.metrics.train_auc;
        let horseshoe = gini(&r.relaxed.fit.best_model_params.coeffs);
        let config = TrainConfig {
            alpha: 0.0,
            ..acceptance_config(FeatureMode::Relaxed, r.seed)
        };
        let data = &r.relaxed.data;
        let (sp, mp) = init_params(&data.train, &config).unwrap();
        let mut snapshots: Vec<(usize, f64, f64)> = Vec::new();
        train_observed(&data.train, &data.val, &config, sp, mp, |rec, _, mp| {
            snapshots.push((rec.epoch, rec.train_auc, gini(&mp.coeffs)))
        })
        .unwrap();
        let &(epoch, auc, unpenalized) = snapshots
            .iter()
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .expect("epoch 0 is always recorded");
        let matched = (auc - target).abs() <= 0.01;
        let pass = matched && horseshoe > unpenalized;
        passes += pass as usize;
        lines.push(format!(
            "seed {}: horseshoe {horseshoe:.4} (train AUC {target:.4}) vs α=0 epoch {epoch} {unpenalized:.4} (train AUC {auc:.4})",
            r.seed
        ));
    }
    Verdict::new(
        passes == runs.len(),
        format!(
            "Gini higher with the horseshoe in {passes}/{} seeds; {}",
            runs.len(),
            lines.join("; ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. Two identical CLI training runs.

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let cfg = RunConfig {
            out: Some(dir.path().join(name)),
            n_patients: 1000,
            seeds: vec![7],
            learning_rate: 1e-2,
            summary_learning_rate: Some(0.1),
            alpha: 1e-2,
            max_epochs: 60,
            eval_interval: 10,
            patience: 10,
            ..Default::default()
        };
        hsumm_cli::commands::train(&cfg).unwrap();
        dir.path().join(name).join("seed_7")
    };
    let (a, b) = (run("first"), run("second"));
    let files = ["history.jsonl", "metrics.json", "model.ckpt"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap())
        .collect();
    let lines = std::fs::read_to_string(a.join("history.jsonl"))
        .unwrap()
        .lines()
        .count();
    Verdict::new(
        differing.is_empty(),
        if differing.is_empty() {
            format!("history.jsonl ({lines} records), metrics.json and model.ckpt byte-identical across two runs")
        } else {
            format!("differing files: {}", differing.join(", "))
        },
    )
}

// ---------------------------------------------------------------------------
// 9. No signal, no discrimination.

fn null_signal() -> Verdict {
    let aucs: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| {
            let g = generate(
                &SynthSpec {
                    seed,
                    ..Default::default()
                }
                .null_signal(),
            )
            .unwrap();
            let run = run_seed(&g.cohort, &acceptance_config(FeatureMode::Relaxed, seed), TEST_FRACTION).unwrap();
            let fit = &run.fit;
            // Scored afresh as a cross-check on the pipeline's own metric.
            let again = model_auc(
                &fit.best_summary_params,
                &fit.best_model_params,
                &acceptance_config(FeatureMode::Relaxed, seed),
                &run.data.test,
            )
            .unwrap();
            assert_eq!(again, run.metrics.test_auc);
            run.metrics.test_auc
        })
        .collect();
    let (m, se) = mean_and_se(&aucs);
    Verdict::new(
        (0.47..=0.53).contains(&m),
        format!(
            "mean test AUC over 5 null cohorts {m:.4} ± {se:.4} ∈ [0.47, 0.53] (per seed {})",
            fmt_list(&aucs)
        ),
    )
}
