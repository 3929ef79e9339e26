//! Learnable side: a small reverse-mode tape, GIN encoders with an
//! edge-scoring featurizer, contrastive objectives, the environment
//! assistant, and the training loops that tie them together.

pub mod assistant;
pub mod checkpoint;
pub mod model;
pub mod objectives;
pub mod optim;
pub mod tape;
pub mod trainer;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Core(#[from] gala_core::Error),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("empty pair assignment")]
    EmptyAssignment,
    #[error(
        "epoch {epoch}: {empty} of {batches} batches had no cross-partition pairs; raise upsample_k"
    )]
    PairStarvation { epoch: usize, empty: usize, batches: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
