//! Gradient saliency and SmoothGrad over complex input spectrograms.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dsp::{stack_batch, ComplexSpectrogram, PhaseMode};
use crate::kv::{self, Section};
use crate::nn::{Model, NnError, Objective, PassOptions};
use crate::seeds;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid SmoothGrad parameters: {0}")]
    InvalidParams(String),
    #[error("saliency expects a full-phase spectrogram, got {0}")]
    PhaseMode(PhaseMode),
    #[error("target class {0} is not 0 or 1")]
    TargetClass(usize),
    #[error("input gradient is not finite")]
    NonFiniteGradient,
    #[error("saliency CSV line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothGradParams {
    pub n_samples: usize,
    /// noise standard deviation as a fraction of the peak bin magnitude
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SmoothGradParams {
    fn default() -> Self {
        Self {
            n_samples: 32,
            sigma: 0.1,
            seed: 0,
        }
    }
}

impl SmoothGradParams {
    pub fn validate(&self) -> Result<(), ExplainError> {
        if self.n_samples == 0 {
            return Err(ExplainError::InvalidParams("explain.n_samples must be at least 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(ExplainError::InvalidParams("explain.sigma must be non-negative".into()));
        }
        Ok(())
    }
}

impl Section for SmoothGradParams {
    const NAME: &'static str = "explain";

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "n_samples" => self.n_samples = kv::value(key, v)?,
            "sigma" => self.sigma = kv::value(key, v)?,
            "seed" => self.seed = kv::value(key, v)?,
            _ => return Err(format!("unknown key explain.{key}")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_samples", self.n_samples.to_string()),
            ("sigma", kv::float(self.sigma)),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Non-negative sensitivity per `(k, t)` bin, row-major by frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub values: Vec<f64>,
    pub n_bins: usize,
    pub n_frames: usize,
    pub clip_id: String,
    pub target_class: usize,
    pub n_samples: usize,
    pub sigma: f64,
}

impl SaliencyMap {
    pub fn get(&self, k: usize, t: usize) -> f64 {
        self.values[k * self.n_frames + t]
    }
}

/// `sqrt((∂y/∂Re z)² + (∂y/∂Im z)²)` per bin, where `y = |logit[target]|`
/// under eval-mode normalization.
pub fn saliency(model: &Model, spec: &ComplexSpectrogram, target_class: usize) -> Result<SaliencyMap, ExplainError> {
    let mut map = saliency_shape(spec, target_class)?;
    map.values = gradient_norm(model, spec, target_class)?;
    Ok(map)
}

fn gradient_norm(model: &Model, spec: &ComplexSpectrogram, target_class: usize) -> Result<Vec<f64>, ExplainError> {
    let x = stack_batch(&[spec])?;
    let opts = PassOptions {
        input_grad: true,
        ..PassOptions::eval()
    };
    let r = model.run(&x, Objective::LogitMagnitude(target_class), opts)?;
    let (gr, gi) = r.input_grad.ok_or(ExplainError::NonFiniteGradient)?;
    let out: Vec<f64> = gr.iter().zip(&gi).map(|(a, b)| (a * a + b * b).sqrt()).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(ExplainError::NonFiniteGradient);
    }
    Ok(out)
}

/// Mean of `n_samples` saliency maps of `spec` plus Gaussian noise on both
/// planes, with standard deviation `sigma` times the peak bin magnitude.
/// Sample `i` draws its noise from a generator keyed by `(seed, i)`; with
/// `sigma = 0` no noise is added.
pub fn smoothgrad(
    model: &Model,
    spec: &ComplexSpectrogram,
    target_class: usize,
    params: &SmoothGradParams,
) -> Result<SaliencyMap, ExplainError> {
    params.validate()?;
    let mut map = saliency_shape(spec, target_class)?;
    let peak = spec.data.magnitudes().into_iter().fold(0.0, f64::max);
    let std = params.sigma * peak;
    let mut sum = vec![0.0; spec.data.len()];
    for i in 0..params.n_samples {
        let sample = if std > 0.0 {
            let mut noisy = spec.clone();
            let dist = Normal::new(0.0, std).map_err(|e| ExplainError::InvalidParams(e.to_string()))?;
            let mut rng = seeds::rng(params.seed, &[i as u64]);
            for v in noisy.data.re_mut() {
                *v += dist.sample(&mut rng);
            }
            for v in noisy.data.im_mut() {
                *v += dist.sample(&mut rng);
            }
            gradient_norm(model, &noisy, target_class)?
        } else {
            gradient_norm(model, spec, target_class)?
        };
        for (s, v) in sum.iter_mut().zip(sample) {
            *s += v;
        }
    }
    let n = params.n_samples as f64;
    map.values = sum.into_iter().map(|s| s / n).collect();
    map.n_samples = params.n_samples;
    map.sigma = params.sigma;
    Ok(map)
}

fn saliency_shape(spec: &ComplexSpectrogram, target_class: usize) -> Result<SaliencyMap, ExplainError> {
    if spec.phase_mode != PhaseMode::Full {
        return Err(ExplainError::PhaseMode(spec.phase_mode));
    }
    if target_class > 1 {
        return Err(ExplainError::TargetClass(target_class));
    }
    Ok(SaliencyMap {
        values: Vec::new(),
        n_bins: spec.n_bins(),
        n_frames: spec.n_frames(),
        clip_id: String::new(),
        target_class,
        n_samples: 1,
        sigma: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    Pgm,
    Csv,
}

impl fmt::Display for MapFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapFormat::Pgm => "pgm",
            MapFormat::Csv => "csv",
        })
    }
}

impl FromStr for MapFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pgm" => Ok(MapFormat::Pgm),
            "csv" => Ok(MapFormat::Csv),
            other => Err(format!("unknown map format `{other}` (pgm|csv)")),
        }
    }
}

/// Plain PGM (`P2`), width `T`, height `F`, lowest frequency on the bottom
/// row, values min-max scaled to `0..=255`. A constant map is all zeros.
pub fn write_pgm<W: Write>(map: &SaliencyMap, mut w: W) -> std::io::Result<()> {
    let (lo, hi) = map
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    writeln!(w, "P2")?;
    writeln!(w, "{} {}", map.n_frames, map.n_bins)?;
    writeln!(w, "255")?;
    for k in (0..map.n_bins).rev() {
        let row: Vec<String> = (0..map.n_frames)
            .map(|t| {
                let v = if range > 0.0 {
                    ((map.get(k, t) - lo) / range * 255.0).round() as u8
                } else {
                    0
                };
                v.to_string()
            })
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// CSV with header `k,t,value`, rows ordered by `k` then `t`.
pub fn write_csv<W: Write>(map: &SaliencyMap, mut w: W) -> std::io::Result<()> {
    writeln!(w, "k,t,value")?;
    for k in 0..map.n_bins {
        for t in 0..map.n_frames {
            writeln!(w, "{k},{t},{:?}", map.get(k, t))?;
        }
    }
    Ok(())
}

/// Reads a map written by [`write_csv`]; metadata fields are left at defaults.
pub fn read_csv<R: BufRead>(r: R) -> Result<SaliencyMap, ExplainError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let bad = |m: &str| ExplainError::Parse {
            line: i + 1,
            message: m.into(),
        };
        if i == 0 {
            if line.trim() != "k,t,value" {
                return Err(bad("expected header `k,t,value`"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad("expected three fields"));
        }
        let k: usize = f[0].parse().map_err(|_| bad("bad k"))?;
        let t: usize = f[1].parse().map_err(|_| bad("bad t"))?;
        let v: f64 = f[2].parse().map_err(|_| bad("bad value"))?;
        rows.push((k, t, v));
    }
    let n_bins = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let n_frames = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != n_bins * n_frames {
        return Err(ExplainError::Parse {
            line: 0,
            message: format!("{} rows do not fill a {n_bins}x{n_frames} grid", rows.len()),
        });
    }
    let mut values = vec![f64::NAN; n_bins * n_frames];
    for (k, t, v) in rows {
        values[k * n_frames + t] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(ExplainError::Parse {
            line: 0,
            message: "duplicate or missing (k, t) cells".into(),
        });
    }
    Ok(SaliencyMap {
        values,
        n_bins,
        n_frames,
        clip_id: String::new(),
        target_class: 0,
        n_samples: 1,
        sigma: 0.0,
    })
}

pub fn export_map(map: &SaliencyMap, path: &Path, format: MapFormat) -> Result<(), ExplainError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        MapFormat::Pgm => write_pgm(map, &mut w)?,
        MapFormat::Csv => write_csv(map, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
