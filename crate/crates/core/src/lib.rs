//! Maximum-likelihood estimation of structured (Toeplitz and friends)
//! covariance matrices by majorization-minimization.

pub mod error;
pub mod linalg;
pub mod projections;
pub mod estimators;
pub mod scenarios;
pub mod crlb;
pub mod reference;

pub use error::{Error, Result};
pub use linalg::HermitianMatrix;
pub use num_complex::Complex64;
