use std::path::PathBuf;

use thermoscope_core::{DataError, EvalError, ImageIoError};
use thermoscope_detect::DetectError;
use thermoscope_style::StyleError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),

    /// An evaluation image also fed training.
    #[error("split hygiene violated: {0}")]
    Leak(String),

    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Image(#[from] ImageIoError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error(transparent)]
    Style(#[from] StyleError),

    #[error(transparent)]
    Detect(#[from] DetectError),
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::Style(StyleError::Config(_))
                | PipelineError::Detect(DetectError::Config(_))
                | PipelineError::Detect(DetectError::EmptyTrainSplit(_))
                | PipelineError::Detect(DetectError::Unavailable(_))
        )
    }

    /// 2 for configuration errors, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_config() {
            2
        } else {
            1
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
