use std::collections::HashMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::TrainError;
use crate::dsp::{load_wav, AudioClip};
use crate::kv::{self, Section};
use crate::seeds;

/// A clip with its class (0 bona fide, 1 spoof) and split group.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub id: String,
    pub label: usize,
    pub clip: AudioClip,
    /// clips sharing a group always land in the same split
    pub group: usize,
}

/// Harmonic pairs: bona fide clips sum cosines with zero phase, their spoof
/// twins reuse the amplitudes with uniformly random phases.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDatasetSpec {
    pub n_pairs: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub n_harmonics: usize,
    pub f0_min: f64,
    pub f0_max: f64,
    /// harmonic amplitudes are drawn from `[amp_min, 1]`
    pub amp_min: f64,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            n_pairs: 400,
            duration_s: 2.0,
            sample_rate: 16000,
            n_harmonics: 4,
            f0_min: 100.0,
            f0_max: 160.0,
            amp_min: 0.3,
            seed: 1,
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.n_pairs == 0 || self.n_harmonics == 0 {
            return bad("synth.n_pairs and synth.n_harmonics must be at least 1".into());
        }
        if !(self.duration_s > 0.0) || self.sample_rate == 0 {
            return bad("synth.duration_s and synth.sample_rate must be positive".into());
        }
        if !(self.f0_min > 0.0 && self.f0_min <= self.f0_max) {
            return bad("synth.f0_min must be positive and not above synth.f0_max".into());
        }
        if !(0.0..=1.0).contains(&self.amp_min) {
            return bad("synth.amp_min must lie in [0, 1]".into());
        }
        let top = self.n_harmonics as f64 * self.f0_max;
        if top >= self.sample_rate as f64 / 2.0 {
            return bad(format!(
                "harmonic {} of f0 {} Hz lies at or above Nyquist",
                self.n_harmonics, self.f0_max
            ));
        }
        Ok(())
    }
}

impl Section for SyntheticDatasetSpec {
    const NAME: &'static str = "synth";

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "n_pairs" => self.n_pairs = kv::value(key, v)?,
            "duration_s" => self.duration_s = kv::value(key, v)?,
            "sample_rate" => self.sample_rate = kv::value(key, v)?,
            "n_harmonics" => self.n_harmonics = kv::value(key, v)?,
            "f0_min" => self.f0_min = kv::value(key, v)?,
            "f0_max" => self.f0_max = kv::value(key, v)?,
            "amp_min" => self.amp_min = kv::value(key, v)?,
            "seed" => self.seed = kv::value(key, v)?,
            _ => return Err(format!("unknown key synth.{key}")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_pairs", self.n_pairs.to_string()),
            ("duration_s", kv::float(self.duration_s)),
            ("sample_rate", self.sample_rate.to_string()),
            ("n_harmonics", self.n_harmonics.to_string()),
            ("f0_min", kv::float(self.f0_min)),
            ("f0_max", kv::float(self.f0_max)),
            ("amp_min", kv::float(self.amp_min)),
            ("seed", self.seed.to_string()),
        ]
    }
}

fn harmonic_sum(n: usize, sr: f64, f0: f64, amps: &[f64], phases: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            amps.iter()
                .zip(phases)
                .enumerate()
                .map(|(h, (a, p))| a * (TAU * (h + 1) as f64 * f0 * t + p).cos())
                .sum()
        })
        .collect()
}

/// Generates `n_pairs` bona fide/spoof pairs, ordered pair by pair.
///
/// The fundamental is drawn on a `1/duration` grid so every harmonic completes
/// whole cycles; both clips of a pair share one gain that puts the louder
/// peak at 0.9.
pub fn synth_dataset(spec: &SyntheticDatasetSpec) -> Result<Vec<LabeledClip>, TrainError> {
    spec.validate()?;
    let sr = spec.sample_rate as f64;
    let n = (spec.duration_s * sr).round() as usize;
    let step = 1.0 / spec.duration_s;
    let (lo, hi) = ((spec.f0_min / step).ceil() as u64, (spec.f0_max / step).floor() as u64);
    if lo > hi {
        return Err(TrainError::InvalidConfig(
            "synth f0 range holds no multiple of 1/duration_s".into(),
        ));
    }
    let mut out = Vec::with_capacity(2 * spec.n_pairs);
    for p in 0..spec.n_pairs {
        let mut rng = seeds::rng(spec.seed, &[p as u64]);
        let f0 = rng.random_range(lo..=hi) as f64 * step;
        let amps: Vec<f64> = (0..spec.n_harmonics)
            .map(|_| rng.random_range(spec.amp_min..=1.0))
            .collect();
        let random: Vec<f64> = (0..spec.n_harmonics).map(|_| rng.random_range(0.0..TAU)).collect();
        let bona = harmonic_sum(n, sr, f0, &amps, &vec![0.0; spec.n_harmonics]);
        let spoof = harmonic_sum(n, sr, f0, &amps, &random);
        let peak = bona.iter().chain(&spoof).fold(0.0f64, |m, v| m.max(v.abs()));
        let gain = if peak > 0.0 { 0.9 / peak } else { 0.0 };
        for (label, s, tag) in [(0, bona, "bona"), (1, spoof, "spoof")] {
            let samples = s.into_iter().map(|v| v * gain).collect();
            out.push(LabeledClip {
                id: format!("pair{p:05}_{tag}"),
                label,
                clip: AudioClip::new(samples, spec.sample_rate)?,
                group: p,
            });
        }
    }
    Ok(out)
}

/// Moves a seeded random `fraction` of the groups into the second set.
pub fn split_by_group(clips: &[LabeledClip], fraction: f64, seed: u64) -> (Vec<LabeledClip>, Vec<LabeledClip>) {
    let mut groups: Vec<usize> = clips.iter().map(|c| c.group).collect();
    groups.sort_unstable();
    groups.dedup();
    let mut rng = seeds::rng(seed, &[u64::MAX]);
    groups.shuffle(&mut rng);
    let n_held = (fraction * groups.len() as f64).round() as usize;
    let mut held: Vec<usize> = groups[..n_held].to_vec();
    held.sort_unstable();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for c in clips {
        if held.binary_search(&c.group).is_ok() {
            b.push(c.clone());
        } else {
            a.push(c.clone());
        }
    }
    (a, b)
}

/// Reads `<relative path>,<label 0|1>[,<group>]` lines (blank lines and `#`
/// comments skipped); paths resolve against the manifest's directory. Clips
/// naming the same group stay together when splitting; a clip without one
/// forms its own group.
pub fn load_corpus(manifest: &Path) -> Result<Vec<LabeledClip>, TrainError> {
    let text = std::fs::read_to_string(manifest)?;
    let root = manifest.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    let mut groups: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: String| TrainError::Manifest { line: i + 1, message: m };
        let (head, last) = line
            .rsplit_once(',')
            .ok_or_else(|| bad("expected `<path>,<label>[,<group>]`".into()))?;
        let (path, label, group) = match head.rsplit_once(',') {
            Some((p, l)) if matches!(l.trim(), "0" | "1") => (p.trim(), l.trim(), last.trim().to_string()),
            _ => (head.trim(), last.trim(), format!("line {}", i + 1)),
        };
        let label: usize = match label {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("label must be 0 or 1, got `{other}`"))),
        };
        let clip = load_wav(root.join(path)).map_err(|e| bad(format!("{path}: {e}")))?;
        let next = groups.len();
        let group = *groups.entry(group).or_insert(next);
        out.push(LabeledClip {
            id: path.to_string(),
            label,
            clip,
            group,
        });
    }
    if out.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    Ok(out)
}
