//! Command-line experiments: generate synthetic cohorts, train over several
//! seeds, evaluate and ablate checkpoints, render key-feature reports and
//! check gradients.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

pub mod commands;
pub mod config;
pub mod error;

use clap::{Args, Parser, Subcommand};
use commands::{GradcheckOptions, Split};
use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
use hsumm::FeatureMode;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "hsumm",
    version,
    about = "Learned interpretable summaries of clinical time series"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat TOML configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed (training seed list, or the cohort seed for `synth`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// relaxed, hard, time_of_prediction_only or flat_series.
    #[arg(long)]
    pub mode: Option<FeatureMode>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort as CSV files plus its ground truth.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train one model per seed and summarize test AUC across seeds.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated seed list (overrides `seeds`).
        #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Learning rate for coefficients and bias.
        #[arg(long)]
        lr: Option<f64>,
    },
    /// AUC of a checkpoint on the configured cohort.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// all, train, val or test (the last three recompute the checkpoint's split).
        #[arg(long, default_value = "all")]
        split: Split,
    },
    /// AUC with all but the N largest coefficients zeroed, for each N.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Comma-separated N values.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Key-feature table of a checkpoint.
    Report {
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 15)]
        top_k: usize,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Number of examples in the checked batch.
        #[arg(long, default_value_t = 8)]
        examples: usize,
        /// Check on rows of the configured cohort instead of a random batch.
        #[arg(long)]
        cohort: bool,
        /// Variables in the random batch.
        #[arg(long, default_value_t = 3)]
        variables: usize,
        /// Hours in the random batch.
        #[arg(long, default_value_t = 12)]
        hours: usize,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn load(common: &CommonArgs, extra: Overrides) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    cfg.apply(&Overrides {
        out: common.out.clone(),
        seed: common.seed,
        mode: common.mode,
        ..extra
    });
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command, printing a short human-readable result to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { common } => {
            let cfg = load(&common, Overrides::default())?;
            let outcome = commands::synth(&cfg, common.seed)?;
            println!(
                "wrote {} patients to {}; realized prevalence {:.4}",
                outcome.n_patients,
                cfg.out_dir()?.display(),
                outcome.truth.realized_prevalence
            );
        }
        Command::Train {
            common,
            seeds,
            epochs,
            lr,
        } => {
            let cfg = load(
                &common,
                Overrides {
                    seeds,
                    epochs,
                    learning_rate: lr,
                    ..Default::default()
                },
            )?;
            let summary = commands::train(&cfg)?;
            for r in &summary.runs {
                println!(
                    "seed {}: train AUC {:.4}  val AUC {:.4}  test AUC {:.4}  best epoch {}  ({})",
                    r.run.seed, r.run.train_auc, r.run.val_auc, r.run.test_auc, r.run.best_epoch, r.status
                );
            }
            println!(
                "{} ({} features): test AUC {}",
                summary.mode, summary.n_features, summary.test_auc.formatted
            );
        }
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let cfg = load(&common, Overrides::default())?;
            let m = commands::eval(&cfg, &checkpoint, split)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&m).map_err(|e| CliError::Numerical(e.to_string()))?
            );
        }
        Command::Ablate {
            common,
            checkpoint,
            n_list,
            split,
        } => {
            let cfg = load(&common, Overrides::default())?;
            print!("{}", commands::ablate(&cfg, &checkpoint, n_list.as_deref(), split)?);
        }
        Command::Report { out, checkpoint, top_k } => {
            let (rows, _) = commands::report(out.as_deref(), &checkpoint, top_k)?;
            for r in &rows {
                println!("{:>3}  {:+.4}  {}", r.rank, r.coefficient, r.describe());
            }
        }
        Command::Gradcheck {
            common,
            epsilon,
            tolerance,
            examples,
            cohort,
            variables,
            hours,
            inject_fault,
        } => {
            let cfg = load(&common, Overrides::default())?;
            let opts = GradcheckOptions {
                epsilon,
                tolerance,
                examples,
                from_cohort: cohort,
                variables,
                hours,
                inject_fault,
                ..Default::default()
            };
            let report = commands::gradcheck(&cfg, &opts)?;
            println!(
                "gradient check passed: {} parameters, max relative error {:.3e} at {}",
                report.entries.len(),
                report.max_relative_error,
                report.worst_parameter
            );
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
