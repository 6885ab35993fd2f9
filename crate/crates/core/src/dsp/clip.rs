use rand::Rng;

use super::DspError;
use crate::kv::{self, Section};

/// Mono time-domain signal with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::BadSampleRate);
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (-1.0..=1.0).contains(*v)))
        {
            return Err(DspError::SampleOutOfRange { index, value });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Clamps every sample into `[-1, 1]` (non-finite samples become 0).
    pub fn clamped(samples: Vec<f64>, sample_rate: u32) -> Result<Self, DspError> {
        let samples = samples
            .into_iter()
            .map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 })
            .collect();
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimConfig {
    /// frames quieter than the loudest frame by more than this are silence
    pub threshold_db: f64,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self {
            threshold_db: 35.0,
            frame_ms: 25.0,
            hop_ms: 10.0,
        }
    }
}

impl TrimConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if !(self.threshold_db > 0.0 && self.frame_ms > 0.0 && self.hop_ms > 0.0) {
            return Err(DspError::InvalidConfig(
                "trim threshold, frame and hop must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Section for TrimConfig {
    const NAME: &'static str = "trim";

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "threshold_db" => self.threshold_db = kv::value(key, v)?,
            "frame_ms" => self.frame_ms = kv::value(key, v)?,
            "hop_ms" => self.hop_ms = kv::value(key, v)?,
            _ => return Err(format!("unknown key trim.{key}")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("threshold_db", kv::float(self.threshold_db)),
            ("frame_ms", kv::float(self.frame_ms)),
            ("hop_ms", kv::float(self.hop_ms)),
        ]
    }
}

/// Drops leading and trailing frames whose RMS is more than `threshold_db`
/// below the loudest frame. Only whole frames are tested; a trailing partial
/// frame is kept when the last whole frame is kept.
pub fn trim_silence(clip: &AudioClip, cfg: &TrimConfig) -> Result<AudioClip, DspError> {
    cfg.validate()?;
    if clip.is_empty() {
        return Err(DspError::EmptyClip);
    }
    let sr = clip.sample_rate as f64;
    let len = clip.len();
    let frame = ((cfg.frame_ms * sr / 1000.0).round() as usize).clamp(1, len);
    let hop = ((cfg.hop_ms * sr / 1000.0).round() as usize).max(1);
    let n_frames = (len - frame) / hop + 1;
    let rms: Vec<f64> = (0..n_frames)
        .map(|i| {
            let s = &clip.samples[i * hop..i * hop + frame];
            (s.iter().map(|v| v * v).sum::<f64>() / frame as f64).sqrt()
        })
        .collect();
    let peak = rms.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(DspError::InsufficientAudio);
    }
    let floor = peak * 10f64.powf(-cfg.threshold_db / 20.0);
    let loud = |r: &f64| *r >= floor;
    let first = rms.iter().position(loud).ok_or(DspError::InsufficientAudio)?;
    let last = rms.iter().rposition(loud).ok_or(DspError::InsufficientAudio)?;
    let start = first * hop;
    let end = if last + 1 == n_frames {
        len
    } else {
        last * hop + frame
    };
    AudioClip::new(clip.samples[start..end].to_vec(), clip.sample_rate)
}

fn target_len(clip: &AudioClip, duration_s: f64) -> Result<usize, DspError> {
    if !(duration_s > 0.0) {
        return Err(DspError::InvalidConfig("crop duration must be positive".into()));
    }
    if clip.is_empty() {
        return Err(DspError::EmptyClip);
    }
    Ok((duration_s * clip.sample_rate as f64).round() as usize)
}

fn window_or_tile(clip: &AudioClip, target: usize, start: usize) -> Result<AudioClip, DspError> {
    let len = clip.len();
    let samples = if len >= target {
        clip.samples[start..start + target].to_vec()
    } else {
        (0..target).map(|i| clip.samples[i % len]).collect()
    };
    AudioClip::new(samples, clip.sample_rate)
}

/// Uniformly random window of exactly `duration_s` seconds; shorter clips are tiled.
pub fn crop_or_pad<R: Rng + ?Sized>(
    clip: &AudioClip,
    duration_s: f64,
    rng: &mut R,
) -> Result<AudioClip, DspError> {
    let target = target_len(clip, duration_s)?;
    let start = if clip.len() > target {
        rng.random_range(0..=clip.len() - target)
    } else {
        0
    };
    window_or_tile(clip, target, start)
}

/// Deterministic variant of [`crop_or_pad`] taking the central window.
pub fn center_crop_or_pad(clip: &AudioClip, duration_s: f64) -> Result<AudioClip, DspError> {
    let target = target_len(clip, duration_s)?;
    let start = clip.len().saturating_sub(target) / 2;
    window_or_tile(clip, target, start)
}
