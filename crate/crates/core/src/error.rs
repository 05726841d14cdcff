use thiserror::Error;

/// Errors raised by the pricing and calibration routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature ran out of bisections before reaching its tolerance.
    #[error("quadrature accuracy not reached: estimate {estimate:e}, error {error:e} after {evaluations} evaluations")]
    AccuracyNotReached {
        estimate: f64,
        error: f64,
        evaluations: usize,
    },

    /// A fixed-point or root iteration did not converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Non-finite intermediate value where the algorithm guarantees a finite one.
    #[error("internal numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
