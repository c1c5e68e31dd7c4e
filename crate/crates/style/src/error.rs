use std::path::PathBuf;

use thermoscope_core::{DataError, ImageIoError};
use thermoscope_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StyleError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("generator has no style set; call set_style first")]
    StyleUnset,

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint {}: {reason}", .path.display())]
    Checkpoint { path: PathBuf, reason: String },

    #[error("cannot write {}: {source}", .path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Image(#[from] ImageIoError),

    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, StyleError>;
