use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration value is out of its allowed range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Two ions share a position, so Coulomb terms diverge.
    #[error("coincident ion positions at indices {0} and {1}")]
    CoincidentPositions(usize, usize),

    /// The equilibrium solver ran out of iterations.
    #[error("equilibrium solve did not converge after {iterations} iterations (gradient norm {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// An argument violates a precondition (bad index, negative time, ...).
    #[error("{0}")]
    Domain(String),

    /// An operation that needs a uniform time grid got an uneven one.
    #[error("time grid is not uniform at index {0}")]
    NonUniformGrid(usize),

    /// Integrator step too coarse for the fastest hopping scale.
    #[error("integration step too large: kappa0 * dt = {0:.3e}, need < {1:.2e}")]
    StepTooLarge(f64, f64),

    /// The data cannot constrain the requested operation.
    #[error("degenerate data: {0}")]
    DegenerateData(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
