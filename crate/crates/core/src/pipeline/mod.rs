//! Dataset ingestion, labels, features, training loops, grouped cross
//! validation, metrics and the synthetic tube generator.

mod features;
mod labels;
mod manifest;
mod prepare;
mod stats;
mod synth;
mod train;

pub use features::{
    assemble_features, local_radius, point_segment_distance, Channel, ChannelLayout, FeatureFlags, FeatureStats,
    PreparedSample,
};
pub use labels::{tawss, tertile_labels, tertile_sizes};
pub use manifest::{Artery, Boundary, SampleManifest, SampleRecord};
pub use prepare::{prepare_all, prepare_sample, PrepareOptions};
pub use stats::{accuracy, anova_oneway, grouped_kfold, mae_by_subject, FoldSplit};
pub use synth::{synth_tube, synth_tubes, SynthTube, WSS_STEPS};
pub use train::{
    constant_predictor_mae, cross_validate, finetune, pretrain, pretrain_mae, EpochRecord, FoldResult, RunLog,
    SegModel, SegSample, TrainConfig,
};

use thiserror::Error;

use crate::geodesic::GeodesicError;
use crate::geom::GeomError;
use crate::model::ModelError;
use crate::nn::NnError;
use crate::spectral::SpectralError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("missing field: {0}")]
    MissingField(String),
    #[error("centerline needs at least 2 vertices, got {0}")]
    EmptyCenterline(usize),
    #[error("{groups} distinct patients cannot fill {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("degenerate groups: {0}")]
    DegenerateGroups(String),
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn category(&self) -> &'static str {
        match self {
            PipelineError::ShapeMismatch(_) => "ShapeMismatch",
            PipelineError::MissingField(_) => "MissingField",
            PipelineError::EmptyCenterline(_) => "EmptyCenterline",
            PipelineError::TooFewGroups { .. } => "TooFewGroups",
            PipelineError::DegenerateGroups(_) => "DegenerateGroups",
            PipelineError::BadManifest(_) => "BadManifest",
            PipelineError::BadConfig(_) => "BadConfig",
            PipelineError::Geom(e) => e.category(),
            PipelineError::Spectral(e) => e.category(),
            PipelineError::Geodesic(e) => e.category(),
            PipelineError::Model(e) => e.category(),
            PipelineError::Nn(e) => e.category(),
            PipelineError::Json(_) => "ParseError",
            PipelineError::Io(_) => "IoError",
        }
    }
}
