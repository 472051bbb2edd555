use thiserror::Error;

/// Errors produced by the reconciliation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("no registered LDPC code can correct QBER {qber}")]
    NoCode { qber: f64 },

    #[error("malformed transcript: {0}")]
    Transcript(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
