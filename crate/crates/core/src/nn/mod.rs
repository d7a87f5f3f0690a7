//! A small reverse-mode automatic differentiation engine over 2-D `f64` tensors,
//! with the losses and optimizer used by the transformer models.

mod graph;
mod params;
mod tensor;
pub mod gradcheck;

pub use graph::{Graph, Var};
pub use params::{adam_step, exp_lr_decay, AdamConfig, Param, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("backward needs a 1x1 loss, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("label {label} at row {row} is outside 0..{classes}")]
    BadLabel { row: usize, label: usize, classes: usize },
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("bad weight file: {0}")]
    BadWeights(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NnError {
    pub fn category(&self) -> &'static str {
        match self {
            NnError::ShapeMismatch { .. } => "ShapeMismatch",
            NnError::NotScalar { .. } => "NotScalar",
            NnError::BadLabel { .. } => "BadLabel",
            NnError::UnknownParam(_) => "UnknownParam",
            NnError::BadWeights(_) => "BadWeights",
            NnError::Io(_) => "Io",
        }
    }
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
