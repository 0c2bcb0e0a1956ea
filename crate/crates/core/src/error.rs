use thiserror::Error;

/// Errors raised by the tracking library.
#[derive(Debug, Error)]
pub enum EotError {
    #[error("invalid covariance `{name}`: {reason}")]
    InvalidCovariance { name: &'static str, reason: String },

    #[error("matrix is not positive definite in {context} (min eigenvalue {min_eigenvalue:.3e}, condition {condition:.3e})")]
    NotPositiveDefinite {
        context: &'static str,
        min_eigenvalue: f64,
        condition: f64,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid extent: {0}")]
    InvalidExtent(String),

    #[error("sensor network is disconnected ({components} components)")]
    DisconnectedNetwork { components: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("step {step}, measurement index {index}: {source}")]
    Step {
        step: usize,
        index: usize,
        #[source]
        source: Box<EotError>,
    },
}

pub type Result<T> = std::result::Result<T, EotError>;

impl EotError {
    pub(crate) fn at_index(self, step: usize, index: usize) -> Self {
        match self {
            e @ EotError::Step { .. } => e,
            other => EotError::Step {
                step,
                index,
                source: Box::new(other),
            },
        }
    }
}
