use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("pattern {index} is not normalized: mean radiated power {measured:.9}")]
    Unnormalized { index: usize, measured: f64 },

    #[error("{what} index {index} out of range (len {len})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("search space holds {size} assignments, limit is {limit}")]
    SearchSpaceTooLarge { size: u128, limit: u128 },

    #[error("sweep point {value}, seed {seed}: {source}")]
    AtGridPoint {
        value: f64,
        seed: usize,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
