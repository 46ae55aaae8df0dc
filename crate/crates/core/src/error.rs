use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}")]
    Dimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("no closed-form enlargement for {0}; use the grid oracle")]
    FallbackRequired(&'static str),

    #[error("model validation failed: {0}")]
    ModelValidation(String),

    #[error("point {0} lies outside the window")]
    Domain(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("ill-conditioned estimate: {0}")]
    IllConditioned(String),

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
