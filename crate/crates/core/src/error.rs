use thiserror::Error;

/// Errors surfaced by the engine and its operators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid query spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("attribute dictionary full: capacity {capacity} exceeded")]
    DictionaryOverflow { capacity: usize },

    #[error("pipeline composition error at stage {index}: {detail}")]
    Composition { index: usize, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("brute-force guard exceeded: {candidates} candidate combinations > {limit}")]
    GuardExceeded { candidates: u64, limit: u64 },

    #[error("query cancelled")]
    Cancelled,

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the query configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidSpec(_)
                | Error::Composition { .. }
                | Error::InvalidArgument(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
