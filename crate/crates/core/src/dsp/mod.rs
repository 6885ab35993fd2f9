//! Audio ingestion and complex time-frequency features.

mod clip;
mod cqt;
mod logcomp;
mod phase;
mod pipeline;
mod stft;
mod wav;

pub use clip::{center_crop_or_pad, crop_or_pad, trim_silence, AudioClip, TrimConfig};
pub use cqt::{cqt, cqt_direct, reflect_index, ComplexSpectrogram, CqtConfig};
pub use logcomp::{log_compress, LogCompressParams};
pub use phase::{phase_ablate, PhaseMode};
pub use pipeline::{prepare_clip, stack_batch};
pub use stft::{hann_periodic, stft};
pub use wav::{load_wav, write_wav};

use thiserror::Error;

use crate::ctensor::TensorError;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed WAV file: {0}")]
    Malformed(String),
    #[error("sample {index} = {value} outside [-1, 1]")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("sample rate must be positive")]
    BadSampleRate,
    #[error("clip is empty")]
    EmptyClip,
    #[error("clip is entirely below the silence threshold")]
    InsufficientAudio,
    #[error("clip of {len} samples is shorter than the required {needed}")]
    ClipTooShort { len: usize, needed: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("phase ablation expects a full-phase spectrogram, got {0}")]
    PhaseMode(PhaseMode),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
