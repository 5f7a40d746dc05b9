use thiserror::Error;

/// Errors raised by the decomposition library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("d = {d} lies outside the coefficient map domain [{lo}, {hi}]")]
    OutOfDomain { d: f64, lo: f64, hi: f64 },

    #[error("covariance matrix not positive definite at row {row} (pivot {pivot:e})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("prediction error variance F_{t} = {value:e} is not positive")]
    FilterBreakdown { t: usize, value: f64 },

    #[error("optimizer did not converge: best objective {best_value} at {best_point:?}")]
    NoConvergence {
        best_point: Vec<f64>,
        best_value: f64,
    },

    #[error("ARMA approximation failed at d = {d}: {reason}")]
    GridFit { d: f64, reason: String },

    #[error("near non-identification: condition number {condition:e} exceeds {limit:e}")]
    NotIdentified { condition: f64, limit: f64 },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    /// True for failures caused by numerics rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::FilterBreakdown { .. }
                | Error::NoConvergence { .. }
                | Error::GridFit { .. }
                | Error::NotIdentified { .. }
                | Error::Estimation(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
