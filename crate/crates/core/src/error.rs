use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: String, expected: usize, got: usize },

    #[error("point is not strictly interior: {0}")]
    NotInterior(String),

    #[error("stage {stage}: reduced Hessian is not positive definite")]
    Factorization { stage: usize },

    #[error("capability missing: {0} (wrap the model function in `ad::Autodiff` to obtain second derivatives)")]
    Capability(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("KKT Jacobian is singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("perturbed solve for parameter {index} failed: {reason}")]
    PerturbedSolve { index: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
