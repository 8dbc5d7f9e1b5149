use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside its documented domain.
    #[error("configuration error: {0}")]
    Config(String),

    /// A covariance density was evaluated on the diagonal s = t.
    #[error("covariance density is singular on the diagonal (s = t = {0})")]
    DiagonalSingularity(f64),

    /// An argument lies outside the domain of a kernel or operator.
    #[error("domain error: {0}")]
    Domain(String),

    /// A Gram matrix failed to factor even after the jitter allowance.
    #[error("numerical PSD failure: {0}")]
    NumericalPsd(String),

    /// The requested process order is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A discretization is too coarse for the requested output.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// The integrand does not appear to have a finite |H| norm.
    #[error("integrand not in |H|: {0}")]
    NotInH(String),

    /// A step function does not conform to the path grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Too few samples, or a degenerate statistic.
    #[error("statistics error: {0}")]
    Statistics(String),

    /// A state vector violates the coupling trace condition.
    #[error("state error: {0}")]
    State(String),

    /// A user-supplied nonlinearity violates dissipativity.
    #[error("contract error: {0}")]
    Contract(String),

    /// A linear solve failed.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// The trajectory exceeded the blow-up guard.
    #[error("divergence at step {step}: norm {norm:e} exceeds guard {guard:e}")]
    Divergence { step: usize, norm: f64, guard: f64 },

    /// A precondition on the arguments of a statistic was violated.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
