//! Discrete Laplace–Beltrami operators and heat kernel signatures.

mod hks;
mod laplacian;

pub use hks::{hks, log_time_samples, shape_hks, standardize_hks, HksField, HksOptions, HksStandardization, LaplacianChoice};
pub use laplacian::{cotan_laplacian, pointcloud_laplacian, LaplacianKind, LaplacianPair, DEFAULT_K_NEIGHBORS};

use thiserror::Error;

use crate::geom::GeomError;
use crate::sparse::LinalgError;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("face {face} has area {area:e} below 1e-14")]
    DegenerateFace { face: usize, area: f64 },
    #[error("k-NN graph has {components} connected components")]
    DisconnectedGraph { components: usize },
    #[error("need n > k_neighbors >= 4 (n = {n}, k_neighbors = {k})")]
    BadNeighborCount { n: usize, k: usize },
    #[error("time range must satisfy 0 < t_min < t_max and count >= 2 (got {t_min}, {t_max}, {count})")]
    BadRange { t_min: f64, t_max: f64, count: usize },
    #[error("times must be positive and strictly ascending")]
    BadTimes,
    #[error("heat kernel signature is constant across points at t = {t}")]
    ConstantColumn { t: f64 },
    #[error("need at least {need} rows, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("eigenpairs are empty")]
    EmptyPairs,
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl SpectralError {
    pub fn category(&self) -> &'static str {
        match self {
            SpectralError::DegenerateFace { .. } => "DegenerateFace",
            SpectralError::DisconnectedGraph { .. } => "DisconnectedGraph",
            SpectralError::BadNeighborCount { .. } => "BadNeighborCount",
            SpectralError::BadRange { .. } => "BadRange",
            SpectralError::BadTimes => "BadTimes",
            SpectralError::ConstantColumn { .. } => "ConstantColumn",
            SpectralError::TooFewPoints { .. } => "TooFewPoints",
            SpectralError::EmptyPairs => "EmptyPairs",
            SpectralError::Geom(e) => e.category(),
            SpectralError::Linalg(e) => e.category(),
        }
    }
}
