use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("environments disagree on the invariant parameter ({0} vs {1})")]
    AlphaMismatch(f64, f64),

    #[error("no twin exists: {0}")]
    NoTwin(String),

    #[error("empty partition cell: {0}")]
    EmptyCell(&'static str),

    #[error("unsupported dataset format version {found} (this build reads up to {supported})")]
    Version { found: u32, supported: u32 },

    #[error("corrupt dataset file: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
