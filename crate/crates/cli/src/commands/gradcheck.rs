use super::{create_dir, write_json};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use hsumm::class_weights;
use hsumm::grad::{finite_difference_check_with, random_batch, random_parameters, FdReport};
use hsumm::pipeline::prepare;

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Examples in the checked batch.
    pub examples: usize,
    /// Draw the examples from the training side of the configured cohort
    /// instead of a random `variables × hours` batch.
    pub from_cohort: bool,
    /// Random-batch shape.
    pub variables: usize,
    pub statics: usize,
    pub hours: usize,
    /// Coefficients compared besides every duration and threshold.
    pub coeff_samples: usize,
    /// Scale the analytic coefficient and duration derivatives by 1.01 before
    /// comparing, to confirm the check detects a wrong gradient.
    pub inject_fault: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            epsilon: 1e-5,
            tolerance: 1e-4,
            examples: 8,
            from_cohort: false,
            variables: 3,
            statics: 2,
            hours: 12,
            coeff_samples: 32,
            inject_fault: false,
        }
    }
}

/// Compares analytic gradients with central differences at seeded random
/// parameters, using the first configured seed, mode, temperature and penalty.
/// The batch is random (standard-normal values, 60 % measured) unless
/// `from_cohort` is set; cohort rows can make the loss stiff in some durations,
/// where a smaller `epsilon` keeps the truncation error below tolerance. Writes `gradcheck.json` when an
/// output directory is configured; a maximum relative error at or above the
/// tolerance is a numerical failure.
pub fn gradcheck(cfg: &RunConfig, opts: &GradcheckOptions) -> CliResult<FdReport> {
    if !(opts.epsilon > 0.0) || !(opts.tolerance > 0.0) || opts.examples < 2 {
        return Err(CliError::Usage(
            "--epsilon and --tolerance must be positive and at least 2 examples used".into(),
        ));
    }
    let seed = cfg.seeds[0];
    let config = cfg.train_config(seed);
    let batch = if opts.from_cohort {
        let (raw, _) = cfg.load_cohort()?;
        let data = prepare(&raw, cfg.test_fraction, config.validation_fraction, seed)?;
        // Alternate classes so both are present however few rows are used.
        let (pos, neg): (Vec<usize>, Vec<usize>) =
            (0..data.train.n_examples()).partition(|&i| data.train.labels[i] == 1);
        let mut rows: Vec<usize> = pos
            .iter()
            .zip(&neg)
            .flat_map(|(&a, &b)| [a, b])
            .take(opts.examples)
            .collect();
        rows.sort_unstable();
        data.train.select(&rows)
    } else {
        if opts.variables == 0 || opts.hours == 0 {
            return Err(CliError::Usage(
                "random gradient-check batch needs variables and hours".into(),
            ));
        }
        random_batch(opts.examples, opts.variables, opts.statics, opts.hours, seed)
    };
    let weights = class_weights::<f64>(&batch.labels)?;
    let (sp, mp) = random_parameters(&batch, config.mode, config.temperature, seed)?;
    let fault = opts.inject_fault;
    let report = finite_difference_check_with(
        &sp,
        &mp,
        &batch,
        &weights,
        &config,
        opts.epsilon,
        opts.coeff_samples,
        seed,
        |g| {
            if fault {
                g.d_coeffs.iter_mut().for_each(|v| *v *= 1.01);
                g.d_durations.iter_mut().for_each(|v| *v *= 1.01);
            }
        },
    )?;
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_json(&out.join("gradcheck.json"), &report)?;
    }
    if !report.passes(opts.tolerance) {
        return Err(CliError::Numerical(format!(
            "gradient check failed: max relative error {:.3e} at {} (tolerance {:.0e})",
            report.max_relative_error, report.worst_parameter, opts.tolerance
        )));
    }
    Ok(report)
}
