use great_core::geodesic::GeodesicError;
use great_core::geom::GeomError;
use great_core::model::ModelError;
use great_core::nn::NnError;
use great_core::pipeline::PipelineError;
use great_core::spectral::SpectralError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
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
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Stable, machine-parseable name printed as `error[<category>]`.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Config(_) => "ConfigError",
            CliError::Geom(e) => e.category(),
            CliError::Spectral(e) => e.category(),
            CliError::Geodesic(e) => e.category(),
            CliError::Model(e) => e.category(),
            CliError::Nn(e) => e.category(),
            CliError::Pipeline(e) => e.category(),
            CliError::Json(_) => "ParseError",
            CliError::Io(_) => "IoError",
        }
    }
}
