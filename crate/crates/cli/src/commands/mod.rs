//! One module per subcommand. Each returns a value describing what it did and
//! writes its artifacts under the output directory.

mod gradcheck;
mod inspect;
mod synth;
mod train;

pub use gradcheck::{gradcheck, GradcheckOptions};
pub use inspect::{ablate, eval, report, select_split, EvalMetrics, Split};
pub use synth::{synth, SynthOutcome};
pub use train::{train, SeedMetrics, TrainSummary};

use crate::error::{CliError, CliResult};
use serde::Serialize;
use std::fs;
use std::path::Path;

pub(crate) fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}

/// Pretty JSON with a trailing newline.
pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}
