//! Spectral shape descriptors and a two-branch point-cloud transformer for
//! classifying wall shear stress regions on vessel surfaces.
//!
//! The crate is organized bottom-up:
//!
//! - [`geom`]: meshes, point clouds, OBJ/PLY/GFLD files, standardization, k-NN.
//! - [`sparse`]: sparse symmetric matrices, SPD solves, generalized eigenpairs.
//! - [`spectral`]: cotangent and k-NN Laplacians, heat kernel signatures.
//! - [`geodesic`]: heat-method geodesic distances.
//! - [`nn`]: a small reverse-mode autodiff engine, losses and Adam.
//! - [`model`]: the cross-attention transformer and the fused two-branch model.
//! - [`pipeline`]: labels, features, training loops, cross-validation, statistics
//!   and the synthetic tube generator.

// `!(x > 0.0)` is used on purpose so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geom;
pub mod sparse;
pub mod spectral;
pub mod geodesic;
pub mod nn;
pub mod model;
pub mod pipeline;
pub mod rng;
