use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MPC: {0}")]
    InvalidMpc(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (quadratic form {0:e})")]
    NotPsd(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid training data: {0}")]
    Training(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
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
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Wraps the error with a short description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Stable short identifier of the error variant, used for machine-readable reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMpc(_) => "invalid_mpc",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::NotPsd(_) => "not_psd",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Training(_) => "training",
            Error::Insufficient(_) => "insufficient_data",
            Error::Parse { .. } => "parse",
            Error::Context { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
