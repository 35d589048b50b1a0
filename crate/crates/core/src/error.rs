use thiserror::Error;

use crate::equilibrium::{Prices, Producer};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("no best response for producer {producer} in [{lo}, {hi}]")]
    NoBestResponse { producer: Producer, lo: f64, hi: f64 },

    #[error("no convergence after {iterations} iterations (last iterate {last}, last change {change:e})")]
    NonConvergence {
        iterations: usize,
        last: Prices,
        change: f64,
    },

    #[error("singular jacobian (determinant {0:e})")]
    SingularJacobian(f64),

    #[error("unstable equilibrium: |J| = {0:e} is not positive")]
    UnstableEquilibrium(f64),

    #[error("no interior solution: {0}")]
    NoInteriorSolution(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),
}

impl Error {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidInput { .. } | Error::InvalidParameters(_)
        )
    }
}
