use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FootError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("point behind camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("no visible keypoints")]
    NoVisibleKeypoints,
    #[error("sequence too short: need at least {needed} frames, got {got}")]
    SequenceTooShort { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid data: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Nn(#[from] footlift_nn::NnError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FootError>;

impl FootError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FootError::Io {
            path: path.into(),
            source,
        }
    }
}
