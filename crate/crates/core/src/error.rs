use thiserror::Error;

use crate::lattice::Embedding;

/// Errors raised across the pipeline.
///
/// Variants are grouped so that a caller can map them onto a small set of
/// outcome classes (see [`Error::class`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("range error on line {line}: {message}")]
    Range { line: usize, message: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("instance too large: {what} is {actual}, limit {limit}")]
    SizeLimit {
        what: &'static str,
        actual: usize,
        limit: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("capacity exceeded: {message}")]
    Capacity {
        message: String,
        partial: Option<Box<Embedding>>,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("numerical failure: {message} (residual {residual:.3e})")]
    Numerical { message: String, residual: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse outcome class used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Capacity,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. }
            | Error::Range { .. }
            | Error::InvalidGraph(_)
            | Error::Parameter(_)
            | Error::Shape(_)
            | Error::Contract(_)
            | Error::Json(_) => ErrorClass::Validation,
            Error::SizeLimit { .. } | Error::Capacity { .. } => ErrorClass::Capacity,
            Error::Numerical { .. } => ErrorClass::Numerical,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
