//! Complex constant-Q transform.
//!
//! Bin `k` has centre frequency `f_k = f_min·2^(k/b)`, window length
//! `N_k = ceil(Q·s/f_k)` with `Q = 1/(2^(1/b) − 1)`, and
//!
//! ```text
//! Z[k, t] = (1/N_k) Σ_{n<N_k} W_k[n]·X[n + t·hop − ⌊N_k/2⌋]·e^{−2πiQn/N_k}
//! ```
//!
//! where `W_k` is a periodic Hann window and out-of-range sample indices are
//! mirrored (reflection without edge repeat), so frame `t` is centred on
//! sample `t·hop`.

use std::f64::consts::PI;
use std::io::Write;

use super::{AudioClip, DspError, PhaseMode};
use crate::ctensor::ComplexTensor;
use crate::kv::{self, Section};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqtConfig {
    pub sample_rate: u32,
    pub f_min: f64,
    pub bins_per_octave: usize,
    pub n_bins: usize,
    pub hop: usize,
}

impl Default for CqtConfig {
    fn default() -> Self {
        Self::for_sample_rate(16000)
    }
}

impl CqtConfig {
    /// Defaults for `sample_rate`: 32.7 Hz, 12 bins per octave, hop 32, and as
    /// many bins as fit below Nyquist.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let mut cfg = Self {
            sample_rate,
            f_min: 32.7,
            bins_per_octave: 12,
            n_bins: 1,
            hop: 32,
        };
        cfg.n_bins = cfg.max_bins();
        cfg
    }

    /// Largest bin count whose top centre frequency stays below `s/2`.
    pub fn max_bins(&self) -> usize {
        let nyq = self.sample_rate as f64 / 2.0;
        let mut n = 0;
        while self.f_min * 2f64.powf(n as f64 / self.bins_per_octave as f64) < nyq {
            n += 1;
        }
        n
    }

    pub fn q(&self) -> f64 {
        1.0 / (2f64.powf(1.0 / self.bins_per_octave as f64) - 1.0)
    }

    pub fn center_freq(&self, k: usize) -> f64 {
        self.f_min * 2f64.powf(k as f64 / self.bins_per_octave as f64)
    }

    pub fn window_len(&self, k: usize) -> usize {
        (self.q() * self.sample_rate as f64 / self.center_freq(k)).ceil() as usize
    }

    pub fn max_window_len(&self) -> usize {
        self.window_len(0)
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        (n_samples.max(1) - 1) / self.hop + 1
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |m: &str| Err(DspError::InvalidConfig(m.to_string()));
        if self.sample_rate == 0 {
            return bad("cqt.sample_rate must be positive");
        }
        if !(self.f_min > 0.0 && self.f_min.is_finite()) {
            return bad("cqt.f_min must be positive");
        }
        if self.bins_per_octave == 0 {
            return bad("cqt.bins_per_octave must be at least 1");
        }
        if self.n_bins == 0 {
            return bad("cqt.n_bins must be at least 1");
        }
        if self.hop == 0 {
            return bad("cqt.hop must be at least 1");
        }
        if self.center_freq(self.n_bins - 1) >= self.sample_rate as f64 / 2.0 {
            return bad("cqt top bin frequency must lie below sample_rate/2");
        }
        Ok(())
    }
}

impl Section for CqtConfig {
    const NAME: &'static str = "cqt";

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "sample_rate" => self.sample_rate = kv::value(key, v)?,
            "f_min" => self.f_min = kv::value(key, v)?,
            "bins_per_octave" => self.bins_per_octave = kv::value(key, v)?,
            "n_bins" => self.n_bins = kv::value(key, v)?,
            "hop" => self.hop = kv::value(key, v)?,
            _ => return Err(format!("unknown key cqt.{key}")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("sample_rate", self.sample_rate.to_string()),
            ("f_min", kv::float(self.f_min)),
            ("bins_per_octave", self.bins_per_octave.to_string()),
            ("n_bins", self.n_bins.to_string()),
            ("hop", self.hop.to_string()),
        ]
    }
}

/// Complex CQT output `(F, T)` plus the phase treatment applied to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub data: ComplexTensor,
    pub config: CqtConfig,
    pub phase_mode: PhaseMode,
}

impl ComplexSpectrogram {
    pub fn n_bins(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_frames(&self) -> usize {
        self.data.shape()[1]
    }

    /// Debug export: header `t,k,re,im`, rows ordered by `t` then `k`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,k,re,im")?;
        let (f, t_len) = (self.n_bins(), self.n_frames());
        for t in 0..t_len {
            for k in 0..f {
                let (re, im) = self.data.get(k * t_len + t);
                writeln!(w, "{t},{k},{re:?},{im:?}")?;
            }
        }
        Ok(())
    }
}

/// Mirror `i` into `0..len` (no edge repeat), repeating as often as needed.
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn check(clip: &AudioClip, config: &CqtConfig) -> Result<(), DspError> {
    config.validate()?;
    if clip.sample_rate() != config.sample_rate {
        return Err(DspError::InvalidConfig(format!(
            "clip sample rate {} differs from cqt.sample_rate {}",
            clip.sample_rate(),
            config.sample_rate
        )));
    }
    let needed = config.max_window_len();
    if clip.len() < needed {
        return Err(DspError::ClipTooShort {
            len: clip.len(),
            needed,
        });
    }
    Ok(())
}

/// Literal per-bin, per-frame evaluation of the transform.
pub fn cqt_direct(clip: &AudioClip, config: &CqtConfig) -> Result<ComplexSpectrogram, DspError> {
    check(clip, config)?;
    let x = clip.samples();
    let t_len = config.n_frames(x.len());
    let q = config.q();
    let mut re = vec![0.0; config.n_bins * t_len];
    let mut im = vec![0.0; config.n_bins * t_len];
    for k in 0..config.n_bins {
        let nk = config.window_len(k);
        let half = (nk / 2) as isize;
        let (kr, ki): (Vec<f64>, Vec<f64>) = (0..nk)
            .map(|n| {
                let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / nk as f64).cos();
                let a = 2.0 * PI * q * n as f64 / nk as f64;
                (w * a.cos() / nk as f64, -w * a.sin() / nk as f64)
            })
            .unzip();
        for t in 0..t_len {
            let start = (t * config.hop) as isize - half;
            let (mut sr, mut si) = (0.0, 0.0);
            for n in 0..nk {
                let v = x[reflect_index(start + n as isize, x.len())];
                sr += v * kr[n];
                si += v * ki[n];
            }
            re[k * t_len + t] = sr;
            im[k * t_len + t] = si;
        }
    }
    Ok(ComplexSpectrogram {
        data: ComplexTensor::new(&[config.n_bins, t_len], re, im)?,
        config: *config,
        phase_mode: PhaseMode::Full,
    })
}

const RESEED: usize = 256;

/// Same transform as [`cqt_direct`], evaluated with running sums.
///
/// The Hann-windowed kernel is a sum of three complex exponentials, so each
/// windowed sum is a difference of prefix sums of `X[m]·e^{−iνm}`. Cost is
/// linear in the clip length per bin instead of proportional to `N_k` per
/// frame.
pub fn cqt(clip: &AudioClip, config: &CqtConfig) -> Result<ComplexSpectrogram, DspError> {
    check(clip, config)?;
    let x = clip.samples();
    let t_len = config.n_frames(x.len());
    let hop = config.hop;
    let q = config.q();
    let pad = config.max_window_len();
    let buf: Vec<f64> = (0..x.len() + 2 * pad)
        .map(|j| x[reflect_index(j as isize - pad as isize, x.len())])
        .collect();
    let mut re = vec![0.0; config.n_bins * t_len];
    let mut im = vec![0.0; config.n_bins * t_len];
    // interleaved prefix sums for the three exponentials: [r0, i0, r1, i1, r2, i2] per position
    let mut pre: Vec<[f64; 6]> = Vec::new();
    for k in 0..config.n_bins {
        let nk = config.window_len(k);
        let lo = pad - nk / 2;
        let span = (t_len - 1) * hop + nk;
        let omega = 2.0 * PI * q / nk as f64;
        let beta = 2.0 * PI / nk as f64;
        let nus = [omega, omega - beta, omega + beta];
        let coefs = [0.5, -0.25, -0.25];
        let step: [(f64, f64); 3] = nus.map(|nu| (nu.cos(), -nu.sin()));
        pre.clear();
        pre.reserve(span + 1);
        pre.push([0.0; 6]);
        let mut acc = [0.0f64; 6];
        let mut ph = [(1.0f64, 0.0f64); 3];
        for (j, &v) in buf[lo..lo + span].iter().enumerate() {
            if j % RESEED == 0 {
                for e in 0..3 {
                    let a = nus[e] * j as f64;
                    ph[e] = (a.cos(), -a.sin());
                }
            }
            for e in 0..3 {
                let (c, s) = ph[e];
                acc[2 * e] += v * c;
                acc[2 * e + 1] += v * s;
                let (rc, rs) = step[e];
                ph[e] = (c * rc - s * rs, c * rs + s * rc);
            }
            pre.push(acc);
        }
        // rotate each window sum back to its own start: e^{+iν·t·hop}
        let (out_r, out_i) = (
            &mut re[k * t_len..(k + 1) * t_len],
            &mut im[k * t_len..(k + 1) * t_len],
        );
        let rot: [(f64, f64); 3] = nus.map(|nu| ((nu * hop as f64).cos(), (nu * hop as f64).sin()));
        let mut ph = [(1.0f64, 0.0f64); 3];
        for t in 0..t_len {
            if t % RESEED == 0 {
                for e in 0..3 {
                    let a = nus[e] * (t * hop) as f64;
                    ph[e] = (a.cos(), a.sin());
                }
            }
            let (p0, p1) = (&pre[t * hop], &pre[t * hop + nk]);
            let (mut sr, mut si) = (0.0, 0.0);
            for e in 0..3 {
                let (dr, di) = (p1[2 * e] - p0[2 * e], p1[2 * e + 1] - p0[2 * e + 1]);
                let (c, s) = ph[e];
                sr += coefs[e] * (dr * c - di * s);
                si += coefs[e] * (dr * s + di * c);
                let (rc, rs) = rot[e];
                ph[e] = (c * rc - s * rs, c * rs + s * rc);
            }
            out_r[t] = sr / nk as f64;
            out_i[t] = si / nk as f64;
        }
    }
    Ok(ComplexSpectrogram {
        data: ComplexTensor::new(&[config.n_bins, t_len], re, im)?,
        config: *config,
        phase_mode: PhaseMode::Full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> CqtConfig {
        CqtConfig {
            sample_rate: 8000,
            f_min: 200.0,
            bins_per_octave: 12,
            n_bins: 30,
            hop: 16,
        }
    }

    #[test]
    fn default_config_fills_to_nyquist() {
        let c = CqtConfig::default();
        assert_eq!(c.hop, 32);
        assert_eq!(c.n_bins, 96);
        assert!(c.center_freq(95) < 8000.0);
        assert!(c.center_freq(96) >= 8000.0);
        c.validate().unwrap();
        assert!((c.q() - 16.817153745105756).abs() < 1e-12);
        for k in 1..c.n_bins {
            assert!(c.center_freq(k) > c.center_freq(k - 1));
            assert!(c.window_len(k) <= c.window_len(k - 1));
        }
    }

    #[test]
    fn invalid_configs_are_named() {
        let mut c = CqtConfig::default();
        c.hop = 0;
        assert!(matches!(c.validate(), Err(DspError::InvalidConfig(m)) if m.contains("hop")));
        let mut c = CqtConfig::default();
        c.n_bins = 97;
        assert!(matches!(c.validate(), Err(DspError::InvalidConfig(m)) if m.contains("below")));
    }

    #[test]
    fn reflection_mirrors_without_edge_repeat() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect_index(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect_index(-7, 1), 0);
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let c = small();
        let clip = AudioClip::new(vec![0.0; 1000], c.sample_rate).unwrap();
        let z = cqt(&clip, &c).unwrap();
        assert_eq!(z.data.shape(), &[30, (1000 - 1) / 16 + 1]);
        assert!(z.data.re().iter().chain(z.data.im()).all(|v| *v == 0.0));
        assert_eq!(z.phase_mode, PhaseMode::Full);
    }

    #[test]
    fn running_sums_match_direct_evaluation() {
        let c = small();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for len in [c.max_window_len(), 777, 2000] {
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let clip = AudioClip::new(x, c.sample_rate).unwrap();
            let a = cqt(&clip, &c).unwrap();
            let b = cqt_direct(&clip, &c).unwrap();
            for i in 0..a.data.len() {
                let (ar, ai) = a.data.get(i);
                let (br, bi) = b.data.get(i);
                assert!((ar - br).abs() < 1e-12 && (ai - bi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn short_clip_rejected() {
        let c = small();
        let clip = AudioClip::new(vec![0.1; c.max_window_len() - 1], c.sample_rate).unwrap();
        assert!(matches!(cqt(&clip, &c), Err(DspError::ClipTooShort { .. })));
        let wrong_rate = AudioClip::new(vec![0.1; 4000], 16000).unwrap();
        assert!(matches!(cqt(&wrong_rate, &c), Err(DspError::InvalidConfig(_))));
    }

    #[test]
    fn csv_export_layout() {
        let c = small();
        let clip = AudioClip::new(vec![0.25; c.max_window_len() + 64], c.sample_rate).unwrap();
        let z = cqt(&clip, &c).unwrap();
        let mut out = Vec::new();
        z.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,k,re,im");
        assert_eq!(lines.len(), 1 + z.data.len());
        assert!(lines[1].starts_with("0,0,"));
        assert!(lines[2].starts_with("0,1,"));
        assert!(lines[1 + z.n_bins()].starts_with("1,0,"));
    }
}
