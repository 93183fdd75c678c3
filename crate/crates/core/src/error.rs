use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The limit object is undefined for these arguments (e.g. d = 1 with ell < 2).
    #[error("undefined limit: {0}")]
    UndefinedLimit(String),

    /// Non-positive curvature met inside CG; the operator is not positive definite.
    #[error("conjugate gradient breakdown at iteration {iteration}: p*Wp = {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("cannot aggregate partial summaries: {0}")]
    Aggregation(String),

    #[error("sample {index}: {source}")]
    Sample {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn at_sample(self, index: u64) -> Self {
        match self {
            e @ Error::Sample { .. } => e,
            e => Error::Sample {
                index,
                source: Box::new(e),
            },
        }
    }

    /// Sample index attached to this error, if any.
    pub fn sample_index(&self) -> Option<u64> {
        match self {
            Error::Sample { index, .. } => Some(*index),
            _ => None,
        }
    }

    /// Innermost error with sample context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Sample { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
