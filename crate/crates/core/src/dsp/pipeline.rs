use rand::Rng;

use super::{center_crop_or_pad, crop_or_pad, trim_silence, AudioClip, ComplexSpectrogram, DspError, TrimConfig};
use crate::ctensor::ComplexTensor;

/// Trims silence, then takes a fixed-length window: random when `rng` is
/// given, central otherwise.
pub fn prepare_clip<R: Rng + ?Sized>(
    clip: &AudioClip,
    trim: &TrimConfig,
    duration_s: f64,
    rng: Option<&mut R>,
) -> Result<AudioClip, DspError> {
    let trimmed = trim_silence(clip, trim)?;
    match rng {
        Some(rng) => crop_or_pad(&trimmed, duration_s, rng),
        None => center_crop_or_pad(&trimmed, duration_s),
    }
}

/// Stacks equally sized spectrograms into a `[B, 1, F, T]` batch.
pub fn stack_batch(specs: &[&ComplexSpectrogram]) -> Result<ComplexTensor, DspError> {
    let first = specs
        .first()
        .ok_or_else(|| DspError::InvalidConfig("cannot stack an empty batch".into()))?;
    let (f, t) = (first.n_bins(), first.n_frames());
    let mut re = Vec::with_capacity(specs.len() * f * t);
    let mut im = Vec::with_capacity(specs.len() * f * t);
    for s in specs {
        if s.data.shape() != [f, t] {
            return Err(DspError::InvalidConfig(format!(
                "spectrogram shape {:?} differs from {:?} in batch",
                s.data.shape(),
                [f, t]
            )));
        }
        re.extend_from_slice(s.data.re());
        im.extend_from_slice(s.data.im());
    }
    Ok(ComplexTensor::new(&[specs.len(), 1, f, t], re, im)?)
}
