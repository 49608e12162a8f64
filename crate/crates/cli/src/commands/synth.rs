use super::{create_dir, write_json, write_text};
use crate::config::RunConfig;
use crate::error::CliResult;
use hsumm::cohort::write_csv;
use hsumm::synth::{describe_ground_truth, generate, ExpectedFeature, GroundTruth};
use serde::Serialize;
use std::path::PathBuf;

/// Contents of `truth.json`.
#[derive(Clone, Debug, Serialize)]
pub struct SynthOutcome {
    pub truth: GroundTruth,
    pub expected_features: Vec<ExpectedFeature>,
    pub n_patients: usize,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

/// Generates the configured synthetic cohort (`seed` overrides `synth_seed`)
/// and writes `timeseries.csv`, `statics.csv`, `labels.csv`, `truth.json`,
/// and `cohort.toml`, a configuration that reads the CSV files back.
pub fn synth(cfg: &RunConfig, seed: Option<u64>) -> CliResult<SynthOutcome> {
    let out = cfg.out_dir()?;
    create_dir(out)?;
    let mut spec = cfg.synth_spec();
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let g = generate(&spec)?;
    let (ts, st, lb) = (
        out.join("timeseries.csv"),
        out.join("statics.csv"),
        out.join("labels.csv"),
    );
    write_csv(&g.cohort, &ts, &st, &lb)?;
    let outcome = SynthOutcome {
        expected_features: describe_ground_truth(&g.truth),
        truth: g.truth,
        n_patients: g.cohort.patients.len(),
        files: vec![ts, st, lb, out.join("truth.json"), out.join("cohort.toml")],
    };
    write_json(&out.join("truth.json"), &outcome)?;
    let variables: Vec<String> = outcome
        .truth
        .variable_names
        .iter()
        .map(|v| format!("\"{v}\""))
        .collect();
    let cohort_toml = format!(
        "source = \"csv\"\ntimeseries = \"timeseries.csv\"\nstatics = \"statics.csv\"\nlabels = \"labels.csv\"\nhours = {}\nvariables = [{}]\n",
        spec.hours,
        variables.join(", ")
    );
    write_text(&out.join("cohort.toml"), &cohort_toml)?;
    Ok(outcome)
}
