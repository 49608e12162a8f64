use std::path::PathBuf;
use thiserror::Error;

/// Failure of a command, classified by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or an unusable configuration (exit 1).
    #[error("{0}")]
    Usage(String),

    /// Input files or checkpoints that cannot be read or are inconsistent (exit 2).
    #[error(transparent)]
    Data(hsumm::Error),

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Non-finite values, aborted training or a failed gradient check (exit 3).
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Output { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub(crate) fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Output {
            path: path.into(),
            source,
        }
    }
}

impl From<hsumm::Error> for CliError {
    fn from(e: hsumm::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Data(e)
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
