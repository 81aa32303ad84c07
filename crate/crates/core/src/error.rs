use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument is outside the operation's contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A model or geometry invariant does not hold (e.g. `sigma <= 0`).
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// An integrand, objective or stencil produced a non-finite value or
    /// left the admissible domain.
    #[error("numerical domain error: {what} at {point:?}")]
    NumericalDomain { what: String, point: Vec<f64> },

    /// Not enough samples to carry out the requested analysis.
    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Malformed JSON or CSV input.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(what: impl Into<String>, point: &[f64]) -> Self {
        Error::NumericalDomain {
            what: what.into(),
            point: point.to_vec(),
        }
    }

    /// True for errors caused by bad input or usage rather than by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::Parse(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
