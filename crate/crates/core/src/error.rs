use thiserror::Error;

/// Errors produced by the core numerical routines.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("quadrature failed to converge: requested rel tol {requested:e}, achieved {achieved:e}")]
    QuadratureNonConvergence { requested: f64, achieved: f64 },

    #[error("optimizer stagnation: {0}")]
    OptimizerStagnation(String),

    #[error("multi-start disagreement: relative spread {spread:e} exceeds {limit:e}")]
    MultiStartDisagreement { spread: f64, limit: f64 },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("exponents out of range: {0}")]
    ExponentRange(String),

    #[error("nonlinear solve failed: {0}")]
    SolverFailure(String),

    #[error("time step underflow: tau {tau:e} fell below tau_min {tau_min:e}")]
    TauUnderflow { tau: f64, tau_min: f64 },
}

pub type Result<T> = std::result::Result<T, CoreError>;
