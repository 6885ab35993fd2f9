//! Complex-valued layers, the classifier, and its checkpoint container.

mod checkpoint;
mod config;
mod layers;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, MAGIC};
pub use config::{halve, ModelConfig, Pooling, KERNEL, PADDING, STRIDE};
pub use layers::{dropout, dropout_mask, magnitude_max_pool, magnitude_softmax};
pub use model::{Model, Objective, Param, PassOptions, PassResult, RunningStats};

use thiserror::Error;

use crate::ctensor::TensorError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("input shape {shape:?} is not [B, 1, {expected_bins}, T]")]
    InputShape { expected_bins: usize, shape: Vec<usize> },
    #[error("input of {f}x{t} bins is too small for four stride-2 blocks (need at least 16x16)")]
    InputTooSmall { f: usize, t: usize },
    #[error("eval mode needs running batch-norm statistics; none have been recorded")]
    NoRunningStats,
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version `{0}`")]
    Version(String),
    #[error("inconsistent checkpoint: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
