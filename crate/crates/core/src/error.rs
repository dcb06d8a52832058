use thiserror::Error;

/// Errors produced by the chart design library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {message}")]
    NumericFailure {
        message: String,
        /// Last residual observed before giving up, when meaningful.
        residual: Option<f64>,
    },

    #[error("optimizer failure: {0}")]
    OptimizerFailure(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("invariant violated at `{field}`: {message}")]
    InvariantViolation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>, residual: Option<f64>) -> Self {
        Error::NumericFailure {
            message: msg.into(),
            residual,
        }
    }

    pub(crate) fn violation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::InvariantViolation {
            field: field.into(),
            message: msg.into(),
        }
    }

    /// Short machine-readable category, used by the CLI for exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NumericFailure { .. } => "numeric-failure",
            Error::OptimizerFailure(_) => "optimizer-failure",
            Error::Parse(_) => "parse-error",
            Error::InvariantViolation { .. } => "invariant-violation",
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => "io-error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
