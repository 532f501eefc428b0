use thiserror::Error;

/// Errors produced by the simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A per-step invariant (trace drift, norm growth) was violated; the step
    /// size is most likely too large.
    #[error("step-size failure at t = {time}: {reason}")]
    StepSize { time: f64, reason: String },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures caused by bad user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidDimension(_) | Error::InvalidParameter(_) | Error::Config(_)
        )
    }
}
