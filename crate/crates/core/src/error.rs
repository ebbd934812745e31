//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate branch: resistance and reactance are both zero")]
    DegenerateBranch,

    #[error("invalid network: {0}")]
    Network(String),

    #[error("network reduction failed: {0}")]
    Reduction(String),

    #[error("singular mass matrix: {0}")]
    SingularMass(String),

    #[error("model assembly failed: {0}")]
    Assembly(String),

    #[error("eigenvalue solver did not converge after {0} iterations")]
    EigenNonConvergence(usize),

    #[error("no sign change in bracket: abscissa {0:.6e} at low end, {1:.6e} at high end")]
    Bracket(f64, f64),

    #[error("integration failed: step size underflow at t = {0:.6e} s")]
    StepUnderflow(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn network(msg: impl Into<String>) -> Self {
        Error::Network(msg.into())
    }
}
