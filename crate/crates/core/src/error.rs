use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("frame index {got} is not after previous frame {previous}")]
    NonMonotonicFrame { previous: u64, got: u64 },

    #[error("duplicate trajectory point for frame {frame}, track {track_id}")]
    DuplicatePoint { frame: u64, track_id: u64 },

    #[error("schema mismatch: expected {expected}, got {got}")]
    Schema { expected: String, got: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("missing input for stage `{stage}`: {path}")]
    MissingInput { stage: String, path: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
