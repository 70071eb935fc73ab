//! Exposure-conditioned re-exposure network: a small reverse-mode autodiff
//! engine, the model and its weight file format, the training loop, and
//! stack generation from a single image.

pub mod error;
pub mod graph;
pub mod model;
pub mod stack;
pub mod tensor;
pub mod training;
pub mod weights;

pub use crate::error::{NetError, Result};
pub use crate::model::{Direction, ModelConfig, ModelWeights};
pub use crate::tensor::Tensor;
