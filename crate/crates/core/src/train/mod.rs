//! Synthetic data, corpus ingestion, augmentation, adversarial retraining and
//! the training loop.

mod augment;
mod config;
mod data;
mod trainer;

pub use augment::{
    add_noise, apply_gain, augment, fgsm_epsilon, fgsm_example, fgsm_perturb, freq_mask, hard_clip, invert, time_shift,
    AugmentationConfig,
};
pub use config::TrainConfig;
pub use data::{load_corpus, split_by_group, synth_dataset, LabeledClip, SyntheticDatasetSpec};
pub use trainer::{train_loop, EarlyStopping, EpochRecord, History, StopDecision, TrainOutcome};

use thiserror::Error;

use crate::ctensor::TensorError;
use crate::dsp::DspError;
use crate::eval::EvalError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("clip `{0}` appears in both the training and validation sets")]
    Overlap(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("input gradient is not finite")]
    NonFiniteGradient,
    #[error("clip `{id}`: {source}")]
    Clip { id: String, source: DspError },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
