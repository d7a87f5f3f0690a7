//! Mesh and point-cloud geometry: representation, file formats, standardization,
//! normals, nearest-neighbor queries and boundary loops.

mod boundary;
pub mod gfld;
pub mod io;
mod knn;
mod mesh;
mod normals;
pub mod primitives;
mod standardize;

pub use boundary::boundary_loops;
pub use knn::{knn, knn_brute_force, KdTree, Neighbors};
pub use mesh::{flatten, unflatten, Field, PointCloud, Shape, TriangleMesh, Vec3};
pub use normals::vertex_normals;
pub use standardize::{standardize, StandardizeRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("face {face} references vertex {index} but only {vertex_count} vertices exist")]
    IndexError {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("face {0} repeats a vertex")]
    DegenerateFace(usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("field `{0}` is not row-aligned with the vertices")]
    FieldRows(String),
    #[error("spread of centered distances is {0:e}, below 1e-12")]
    DegenerateScale(f64),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("{count} vertices have no incident face (first: {first:?})")]
    ZeroNormal { count: usize, first: Vec<usize> },
    #[error("k = {k} exceeds the {n} available points")]
    KTooLarge { k: usize, n: usize },
    #[error("edge ({0}, {1}) has more than two incident faces")]
    NonManifold(usize, usize),
    #[error("shape has no faces")]
    NoFaces,
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GeomError {
    pub fn category(&self) -> &'static str {
        match self {
            GeomError::ParseError { .. } => "ParseError",
            GeomError::IndexError { .. } => "IndexError",
            GeomError::DegenerateFace(_) => "DegenerateFace",
            GeomError::NonFinite(_) => "NonFinite",
            GeomError::FieldRows(_) => "FieldRows",
            GeomError::DegenerateScale(_) => "DegenerateScale",
            GeomError::TooFewPoints { .. } => "TooFewPoints",
            GeomError::ZeroNormal { .. } => "ZeroNormal",
            GeomError::KTooLarge { .. } => "KTooLarge",
            GeomError::NonManifold(..) => "NonManifold",
            GeomError::NoFaces => "NoFaces",
            GeomError::Unsupported(_) => "Unsupported",
            GeomError::Io(_) => "IoError",
        }
    }
}
