use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("row {0} has no observed entries")]
    AllMissingRow(usize),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("number of clusters {k} outside 1..={kmax}")]
    KOutOfRange { k: usize, kmax: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("allocation state inconsistent with data: {0}")]
    InconsistentState(String),

    #[error("output directory {0} already exists")]
    OutputExists(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the input data rather than by usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::EmptyInput
                | Error::AllMissingRow(_)
                | Error::DimensionMismatch(_)
                | Error::Io { .. }
        )
    }
}
