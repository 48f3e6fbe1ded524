use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("expected {expected} parameters, got {actual}")]
    ParamCountMismatch { expected: usize, actual: usize },

    #[error("malformed circuit tensor: {0}")]
    MalformedTensor(String),

    #[error("gate would land at depth {depth}, maximum is {max_depth}")]
    DepthOverflow { depth: usize, max_depth: usize },

    #[error("episode is finished; call reset() first")]
    EpisodeDone,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("cache corrupted at {path}: {reason}")]
    CacheCorrupt { path: PathBuf, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
