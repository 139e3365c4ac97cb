use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An event violates the stream bounds. `index` is the position in the
    /// caller's input list.
    #[error("event {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Malformed file contents; `offset` is the byte position of the bad
    /// header field or record.
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: u64, reason: String },

    #[error("scene: {0}")]
    Scene(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("membrane traces missing: run the forward pass with training enabled")]
    MissingTraces,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(offset: u64, reason: impl Into<String>) -> Self {
        Error::Parse { offset, reason: reason.into() }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
