use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("`{0}` is a continuous environment")]
    ContinuousEnv(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("multiplicative composition requires nonnegative components, got {0}")]
    NegativeComponent(f64),
    #[error("unknown parameterization id {0}")]
    UnknownId(usize),
    #[error("empty alternative pool with alpha < 1")]
    EmptyPool,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty buffer")]
    EmptyBuffer,
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
