use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown network variant `{0}`")]
    UnknownVariant(String),
    #[error("training diverged: non-finite gradient in `{0}`")]
    TrainingDiverged(String),
    #[error("corrupt dataset: {0}")]
    CorruptDataset(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
