use std::path::PathBuf;

use thiserror::Error;

use crate::model::Direction;

pub type Result<T, E = NetError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Core(#[from] evhdr_core::Error),

    #[error("input {height}x{width} is not divisible by {multiple}; pad it or call forward()")]
    PaddingRequired { height: usize, width: usize, multiple: usize },

    #[error("EV step must be finite, got {0}")]
    NonFiniteEv(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("no {0} model loaded")]
    MissingModel(Direction),

    #[error("expected a {expected} model, got {found}")]
    DirectionMismatch { expected: Direction, found: Direction },

    #[error("weight file {}: {reason}", path.display())]
    WeightFormat { path: PathBuf, reason: String },

    #[error("config hash mismatch: {0}")]
    ConfigHashMismatch(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset error: {0}")]
    Dataset(String),
}

impl NetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NetError::Io { path: path.into(), source }
    }
}
