use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs that can never produce a valid result (infeasible specs, bad options).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("candidate sampling failed after {rejections} consecutive rejected candidates")]
    SamplingFailure { rejections: usize },

    /// A model was evaluated outside its domain. `value` is the offending quantity.
    #[error("evaluation error: {what} (value = {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("insufficient records: need at least {needed}, got {got}")]
    InsufficientRecords { needed: usize, got: usize },

    #[error("fit failed: {0}")]
    FitFailure(String),

    /// A caller broke an operation's precondition (shape mismatch, too few points).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
