use thiserror::Error;

/// Errors raised by the solvers.
///
/// Precondition failures of optional engines (for example a rejected constant
/// condition) are values, not errors; see the individual operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("non-finite state for particle {particle} at step {step}")]
    NonFinite { particle: usize, step: usize },

    #[error("particle {particle} left the domain at step {step} (state {state:?})")]
    DomainExit {
        particle: usize,
        step: usize,
        state: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("validity horizon exceeded: {0}")]
    Horizon(String),

    #[error("boundary mass {mass:e} exceeds the limit {limit:e}; enlarge the grid (try half-width {suggested:.3})")]
    GridTooSmall {
        mass: f64,
        limit: f64,
        suggested: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
