use thiserror::Error;

/// Errors raised anywhere in the simulator or the analytical engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A dimension invariant is violated (`K > M`, `tau < K`, ...).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A value lies outside its admissible domain (negative variance, `xi < 1`, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid cell geometry, e.g. a non-positive user distance.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A matrix expected to be positive semidefinite has a significantly negative eigenvalue.
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    /// A linear system could not be solved (singular or ill-conditioned matrix).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Fixed-point iteration did not reach the requested tolerance.
    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// The derivative system `(I - J) e' = v` is singular or `J` has spectral radius >= 1.
    #[error("derivative system is singular: spectral radius of J is {0}")]
    SpectralRadius(f64),

    /// A consistency check exceeded its tolerance.
    #[error("tolerance breach: {0}")]
    Tolerance(String),

    /// Manifest or command-line input could not be understood.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
