use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("truncated input: {0}")]
    TruncatedInput(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("stream mismatch: {0}")]
    StreamMismatch(String),
    #[error("unsupported version {0}")]
    UnknownVersion(u32),
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("corrupt dataset: {0}")]
    CorruptDataset(String),
    #[error("not enough samples: {0}")]
    Deficit(String),
    #[error(transparent)]
    Nn(#[from] dlimd_nn::NnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::InvalidArgument(msg.into()))
}
