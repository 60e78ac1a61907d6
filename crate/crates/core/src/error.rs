use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Sobolev exponents violate a required inequality; the message names it.
    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("cholesky factorization failed at pivot {index} (value {value:e})")]
    NonPositivePivot { index: usize, value: f64 },

    #[error("circulant embedding is not nonnegative definite: most negative eigenvalue {min_eigenvalue:e}")]
    Embedding { min_eigenvalue: f64 },

    #[error("root finder did not converge in bracket [{lo}, {hi}] (|f| = {residual:e})")]
    RootFinding { lo: f64, hi: f64, residual: f64 },

    #[error("eigensolver failed on a {size}x{size} matrix (trace {trace:e}, max |entry| {max_abs:e})")]
    Eigen { size: usize, trace: f64, max_abs: f64 },

    #[error("quadrature did not converge: estimate {estimate:e}, achieved error {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("rate fit needs at least {needed} usable points, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
