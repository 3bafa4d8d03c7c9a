use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A graph or schedule violates one of its structural invariants.
    #[error("malformed structure: {0}")]
    Structural(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// Eval-mode batch norm was requested before any train-mode pass.
    #[error("batch-norm running statistics are uninitialized for {0}")]
    UninitializedStatistics(String),

    #[error("non-finite loss at step {step} (offending parameter block `{block}`)")]
    NonFinite { step: usize, block: String },

    #[error("malformed {what} file {path}: {reason}")]
    Format {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
