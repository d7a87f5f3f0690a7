//! Sparse symmetric matrices, SPD solvers and the generalized eigensolver.

mod cg;
mod cholesky;
mod dense;
mod eigen;
mod matrix;

pub use cg::{solve_spd, solve_spd_with, CgOptions};
pub use cholesky::{rcm_ordering, EnvelopeCholesky};
pub use dense::{dense_eigen_oracle, DENSE_ORACLE_MAX_N};
pub use eigen::{smallest_eigenpairs, EigenOptions, EigenPairs};
pub use matrix::SparseSymMatrix;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("entry ({row}, {col}) outside a {n}×{n} matrix")]
    IndexOutOfRange { row: usize, col: usize, n: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("solver did not converge ({converged} of {requested} converged)")]
    NotConverged { converged: usize, requested: usize },
    #[error("system is singular or not positive definite")]
    SingularSystem,
    #[error("n = {n} exceeds the dense limit {max}")]
    TooLarge { n: usize, max: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LinalgError {
    pub fn category(&self) -> &'static str {
        match self {
            LinalgError::DimensionMismatch { .. } => "DimensionMismatch",
            LinalgError::IndexOutOfRange { .. } => "IndexError",
            LinalgError::NotSymmetric { .. } => "NotSymmetric",
            LinalgError::NonFinite => "NonFinite",
            LinalgError::NotConverged { .. } => "NotConverged",
            LinalgError::SingularSystem => "SingularSystem",
            LinalgError::TooLarge { .. } => "TooLarge",
            LinalgError::InvalidArgument(_) => "InvalidArgument",
            LinalgError::Io(_) => "IoError",
        }
    }
}
