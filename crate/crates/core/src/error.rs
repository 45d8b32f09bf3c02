use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("dataset must contain both classes")]
    SingleClass,

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("singular regression system in {0}")]
    Singular(&'static str),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("unsupported format version: {0}")]
    Version(String),

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("invalid config at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("explainer failed on frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("black-box classifier: {0}")]
    BlackBox(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt { path: path.into(), reason: reason.into() }
    }

    pub(crate) fn dims(expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch { expected: expected.to_string(), got: got.to_string() }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) => 2,
            Error::NonFinite(_)
            | Error::Diverged { .. }
            | Error::Singular(_)
            | Error::UndefinedCorrelation(_) => 4,
            Error::Frame { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
