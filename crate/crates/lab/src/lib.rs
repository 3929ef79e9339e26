//! Metrics, experiment suites, acceptance checks and result files.

pub mod acceptance;
pub mod metrics;
pub mod plot;
pub mod report;
pub mod spec;
pub mod suite;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] gala_core::Error),
    #[error(transparent)]
    Train(#[from] gala_train::TrainError),
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
