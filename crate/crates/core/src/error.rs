use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("split sizes {requested} exceed dataset size {available}")]
    SplitTooLarge { requested: usize, available: usize },

    #[error("class {class} has no samples in the score-filtered validation set")]
    MissingClass { class: usize },

    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected} responses, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unsupported model document version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),

    #[error("relative error reduction is undefined when the softmax baseline is perfect")]
    PerfectBaseline,

    #[error("{0}")]
    Insufficient(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
