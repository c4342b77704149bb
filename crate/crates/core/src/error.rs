//! Shared error type for the core crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A request would build a state space beyond supported limits.
    #[error("state space too large: {0}")]
    Capacity(String),

    /// The linear solve for a stationary law did not produce a
    /// verifiable distribution.
    #[error("stationary solve failed: {0}")]
    SolveFailed(String),

    /// A coupled run observed a modified-list position below the
    /// original-list position for a front item. Carries the trailing
    /// event log for diagnosis.
    #[error(transparent)]
    Domination(Box<crate::coupling::DominationReport>),
}
