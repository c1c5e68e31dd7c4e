use std::path::PathBuf;

use thermoscope_core::{DataError, EvalError, ImageIoError};
use thermoscope_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("invalid detector configuration: {0}")]
    Config(String),

    #[error("training split of `{0}` is empty")]
    EmptyTrainSplit(String),

    #[error("non-finite detector loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },

    #[error("{0}")]
    Unavailable(String),

    #[error("external detector command failed: {0}")]
    External(String),

    #[error("detector handle {}: {reason}", .path.display())]
    Handle { path: PathBuf, reason: String },

    #[error("benchmark needs at least one image and one timed run")]
    EmptyBenchmark,

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Image(#[from] ImageIoError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, DetectError>;
