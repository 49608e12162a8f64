use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },

    #[error("{file}: duplicate entry {key} on lines {first_line} and {second_line}")]
    Conflict {
        file: String,
        key: String,
        first_line: u64,
        second_line: u64,
    },

    #[error("{file}:{line}: {message}")]
    Range { file: String, line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough data: {0}")]
    Size(String),

    #[error("labels contain a single class; a class-balanced objective is undefined")]
    SingleClass,

    #[error("non-finite value in {block}: {detail}")]
    NonFinite { block: String, detail: String },

    #[error("prevalence calibration infeasible: {0}")]
    Infeasible(String),

    #[error("checkpoint format (version {version}): {message}")]
    Checkpoint { version: u32, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}
