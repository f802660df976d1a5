use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is indefinite (min eigenvalue {min_eigenvalue:.3e}, max {max_eigenvalue:.3e})")]
    Indefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Fisher information is singular: rank {rank} of {dim} ({deficiency} deficient directions)")]
    SingularFisher {
        rank: usize,
        dim: usize,
        deficiency: usize,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("eigendecomposition did not converge")]
    EigenFailure,
}

pub type Result<T> = std::result::Result<T, Error>;
