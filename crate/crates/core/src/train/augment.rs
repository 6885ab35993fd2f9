use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::TrainError;
use crate::ctensor::ComplexTensor;
use crate::dsp::{AudioClip, ComplexSpectrogram, DspError};
use crate::kv::{self, Section};
use crate::nn::{Model, Objective, PassOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationConfig {
    pub p_gain: f64,
    /// gains are drawn uniformly from `±gain_db`
    pub gain_db: f64,
    pub p_polarity: f64,
    pub p_clip: f64,
    /// absolute level samples are clipped to
    pub clip_threshold: f64,
    pub p_noise: f64,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub p_shift: f64,
    /// rotations are drawn uniformly from `±shift_max_s`
    pub shift_max_s: f64,
    pub p_freq_mask: f64,
    pub freq_mask_max_bins: usize,
    pub p_fgsm: f64,
    /// FGSM step as a fraction of the batch's mean bin magnitude
    pub fgsm_fraction: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            p_gain: 0.2,
            gain_db: 6.0,
            p_polarity: 0.2,
            p_clip: 0.2,
            clip_threshold: 0.5,
            p_noise: 0.2,
            snr_min_db: 10.0,
            snr_max_db: 40.0,
            p_shift: 0.2,
            shift_max_s: 0.2,
            p_freq_mask: 0.2,
            freq_mask_max_bins: 8,
            p_fgsm: 0.2,
            fgsm_fraction: 0.0025,
        }
    }
}

impl AugmentationConfig {
    /// Every transform disabled.
    pub fn none() -> Self {
        Self {
            p_gain: 0.0,
            p_polarity: 0.0,
            p_clip: 0.0,
            p_noise: 0.0,
            p_shift: 0.0,
            p_freq_mask: 0.0,
            p_fgsm: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let probs = [
            self.p_gain,
            self.p_polarity,
            self.p_clip,
            self.p_noise,
            self.p_shift,
            self.p_freq_mask,
            self.p_fgsm,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(TrainError::InvalidConfig("augment probabilities must lie in [0, 1]".into()));
        }
        if !(self.fgsm_fraction > 0.0) {
            return Err(TrainError::InvalidConfig("augment.fgsm_fraction must be positive".into()));
        }
        if !(self.gain_db >= 0.0 && self.shift_max_s >= 0.0) {
            return Err(TrainError::InvalidConfig("augment gain and shift ranges must be non-negative".into()));
        }
        if !(self.clip_threshold > 0.0 && self.clip_threshold <= 1.0) {
            return Err(TrainError::InvalidConfig("augment.clip_threshold must lie in (0, 1]".into()));
        }
        if !(self.snr_min_db <= self.snr_max_db) {
            return Err(TrainError::InvalidConfig("augment.snr_min_db must not exceed snr_max_db".into()));
        }
        Ok(())
    }
}

impl Section for AugmentationConfig {
    const NAME: &'static str = "augment";

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "p_gain" => self.p_gain = kv::value(key, v)?,
            "gain_db" => self.gain_db = kv::value(key, v)?,
            "p_polarity" => self.p_polarity = kv::value(key, v)?,
            "p_clip" => self.p_clip = kv::value(key, v)?,
            "clip_threshold" => self.clip_threshold = kv::value(key, v)?,
            "p_noise" => self.p_noise = kv::value(key, v)?,
            "snr_min_db" => self.snr_min_db = kv::value(key, v)?,
            "snr_max_db" => self.snr_max_db = kv::value(key, v)?,
            "p_shift" => self.p_shift = kv::value(key, v)?,
            "shift_max_s" => self.shift_max_s = kv::value(key, v)?,
            "p_freq_mask" => self.p_freq_mask = kv::value(key, v)?,
            "freq_mask_max_bins" => self.freq_mask_max_bins = kv::value(key, v)?,
            "p_fgsm" => self.p_fgsm = kv::value(key, v)?,
            "fgsm_fraction" => self.fgsm_fraction = kv::value(key, v)?,
            _ => return Err(format!("unknown key augment.{key}")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("p_gain", kv::float(self.p_gain)),
            ("gain_db", kv::float(self.gain_db)),
            ("p_polarity", kv::float(self.p_polarity)),
            ("p_clip", kv::float(self.p_clip)),
            ("clip_threshold", kv::float(self.clip_threshold)),
            ("p_noise", kv::float(self.p_noise)),
            ("snr_min_db", kv::float(self.snr_min_db)),
            ("snr_max_db", kv::float(self.snr_max_db)),
            ("p_shift", kv::float(self.p_shift)),
            ("shift_max_s", kv::float(self.shift_max_s)),
            ("p_freq_mask", kv::float(self.p_freq_mask)),
            ("freq_mask_max_bins", self.freq_mask_max_bins.to_string()),
            ("p_fgsm", kv::float(self.p_fgsm)),
            ("fgsm_fraction", kv::float(self.fgsm_fraction)),
        ]
    }
}

/// Scales by `10^(db/20)`, clamping to `[-1, 1]`.
pub fn apply_gain(clip: &AudioClip, db: f64) -> AudioClip {
    let g = 10f64.powf(db / 20.0);
    let s = clip.samples().iter().map(|v| (v * g).clamp(-1.0, 1.0)).collect();
    AudioClip::new(s, clip.sample_rate()).expect("clamped samples")
}

pub fn invert(clip: &AudioClip) -> AudioClip {
    AudioClip::new(clip.samples().iter().map(|v| -v).collect(), clip.sample_rate()).expect("negation stays in range")
}

pub fn hard_clip(clip: &AudioClip, level: f64) -> AudioClip {
    let s = clip.samples().iter().map(|v| v.clamp(-level, level)).collect();
    AudioClip::new(s, clip.sample_rate()).expect("clipped samples")
}

/// Circular shift by `k` samples (positive delays the signal).
pub fn time_shift(clip: &AudioClip, k: isize) -> AudioClip {
    let mut s = clip.samples().to_vec();
    if !s.is_empty() {
        let r = k.rem_euclid(s.len() as isize) as usize;
        s.rotate_right(r);
    }
    AudioClip::new(s, clip.sample_rate()).expect("rotation keeps samples")
}

/// White or pink noise at `snr_db` relative to the clip's mean power, then clamped.
pub fn add_noise<R: Rng + ?Sized>(clip: &AudioClip, snr_db: f64, pink: bool, rng: &mut R) -> AudioClip {
    let x = clip.samples();
    let mut noise: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(rng)).collect();
    if pink {
        // Kellet's economy filter, about -3 dB per octave above 100 Hz at 44.1 kHz
        let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
        for v in noise.iter_mut() {
            let w = *v;
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            *v = b0 + b1 + b2 + w * 0.1848;
        }
    }
    let ps = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    let pn = noise.iter().map(|v| v * v).sum::<f64>() / noise.len().max(1) as f64;
    let scale = if pn > 0.0 { (ps / pn / 10f64.powf(snr_db / 10.0)).sqrt() } else { 0.0 };
    let s = x
        .iter()
        .zip(&noise)
        .map(|(a, n)| (a + scale * n).clamp(-1.0, 1.0))
        .collect();
    AudioClip::new(s, clip.sample_rate()).expect("clamped samples")
}

/// Waveform transforms, each firing independently with its probability, in the
/// order gain, polarity, clipping, noise, time shift. Returns `None` when no
/// transform fired.
pub fn augment<R: Rng + ?Sized>(clip: &AudioClip, cfg: &AugmentationConfig, rng: &mut R) -> Option<AudioClip> {
    let mut out: Option<AudioClip> = None;
    let cur = |o: &Option<AudioClip>| o.clone().unwrap_or_else(|| clip.clone());
    if rng.random::<f64>() < cfg.p_gain {
        let db = rng.random_range(-cfg.gain_db..=cfg.gain_db);
        out = Some(apply_gain(&cur(&out), db));
    }
    if rng.random::<f64>() < cfg.p_polarity {
        out = Some(invert(&cur(&out)));
    }
    if rng.random::<f64>() < cfg.p_clip {
        out = Some(hard_clip(&cur(&out), cfg.clip_threshold));
    }
    if rng.random::<f64>() < cfg.p_noise {
        let snr = rng.random_range(cfg.snr_min_db..=cfg.snr_max_db);
        let pink = rng.random::<bool>();
        out = Some(add_noise(&cur(&out), snr, pink, rng));
    }
    if rng.random::<f64>() < cfg.p_shift {
        let max = (cfg.shift_max_s * clip.sample_rate() as f64).round() as i64;
        let k = rng.random_range(-max..=max);
        out = Some(time_shift(&cur(&out), k as isize));
    }
    out
}

/// With probability `p_freq_mask`, zeroes a random band of up to
/// `freq_mask_max_bins` frequency rows.
pub fn freq_mask<R: Rng + ?Sized>(spec: &mut ComplexSpectrogram, cfg: &AugmentationConfig, rng: &mut R) {
    if rng.random::<f64>() >= cfg.p_freq_mask || cfg.freq_mask_max_bins == 0 {
        return;
    }
    let (f, t) = (spec.n_bins(), spec.n_frames());
    let w = rng.random_range(1..=cfg.freq_mask_max_bins.min(f));
    let start = rng.random_range(0..=f - w);
    for k in start..start + w {
        spec.data.re_mut()[k * t..(k + 1) * t].fill(0.0);
        spec.data.im_mut()[k * t..(k + 1) * t].fill(0.0);
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `z + eps·(sign(∂L/∂Re z) + i·sign(∂L/∂Im z))` per bin.
pub fn fgsm_perturb(batch: &ComplexTensor, grad: &(Vec<f64>, Vec<f64>), eps: f64) -> Result<ComplexTensor, TrainError> {
    if grad.0.iter().chain(&grad.1).any(|v| !v.is_finite()) {
        return Err(TrainError::NonFiniteGradient);
    }
    let re = batch.re().iter().zip(&grad.0).map(|(z, g)| z + eps * sign(*g)).collect();
    let im = batch.im().iter().zip(&grad.1).map(|(z, g)| z + eps * sign(*g)).collect();
    Ok(ComplexTensor::new(batch.shape(), re, im).map_err(DspError::from)?)
}

/// FGSM step size for a batch: `fraction` of its mean bin magnitude.
pub fn fgsm_epsilon(batch: &ComplexTensor, fraction: f64) -> f64 {
    let m = batch.magnitudes();
    fraction * m.iter().sum::<f64>() / m.len().max(1) as f64
}

/// Adversarial copy of a spectrogram batch under the training loss
/// (batch statistics, no dropout); labels are unchanged.
pub fn fgsm_example(model: &Model, batch: &ComplexTensor, targets: &[usize], fraction: f64) -> Result<ComplexTensor, TrainError> {
    let opts = PassOptions {
        batch_stats: true,
        dropout: None,
        param_grads: false,
        input_grad: true,
    };
    let r = model.run(batch, Objective::CrossEntropy(targets), opts)?;
    let grad = r.input_grad.ok_or(TrainError::NonFiniteGradient)?;
    fgsm_perturb(batch, &grad, fgsm_epsilon(batch, fraction))
}
