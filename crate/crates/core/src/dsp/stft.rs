use std::f64::consts::PI;

use super::{AudioClip, DspError};
use crate::ctensor::ComplexTensor;

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Short-time Fourier transform by direct summation, shape `(N, frames)`:
/// `Z[k, t] = Σ_n W[n]·X[n + t·hop]·e^{−2πikn/N}` over frames that fit entirely.
pub fn stft(clip: &AudioClip, window: &[f64], hop: usize) -> Result<ComplexTensor, DspError> {
    let n = window.len();
    let x = clip.samples();
    if n == 0 || hop == 0 {
        return Err(DspError::InvalidConfig("window and hop must be non-empty".into()));
    }
    if n > x.len() {
        return Err(DspError::ClipTooShort {
            len: x.len(),
            needed: n,
        });
    }
    let frames = (x.len() - n) / hop + 1;
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|j| {
            let a = 2.0 * PI * j as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .unzip();
    let mut re = vec![0.0; n * frames];
    let mut im = vec![0.0; n * frames];
    let mut buf = vec![0.0; n];
    for t in 0..frames {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = window[j] * x[t * hop + j];
        }
        for k in 0..n {
            let (mut sr, mut si) = (0.0, 0.0);
            for (j, &v) in buf.iter().enumerate() {
                // twiddle index kn mod N keeps the table exact
                let idx = (k * j) % n;
                sr += v * cos[idx];
                si -= v * sin[idx];
            }
            re[k * frames + t] = sr;
            im[k * frames + t] = si;
        }
    }
    Ok(ComplexTensor::new(&[n, frames], re, im)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_signal_gives_zero() {
        let clip = AudioClip::new(vec![0.0; 64], 8000).unwrap();
        let z = stft(&clip, &hann_periodic(16), 8).unwrap();
        assert_eq!(z.shape(), &[16, 7]);
        assert!(z.re().iter().chain(z.im()).all(|v| *v == 0.0));
    }

    #[test]
    fn constant_signal_hits_dc() {
        let clip = AudioClip::new(vec![1.0; 32], 8000).unwrap();
        let z = stft(&clip, &[1.0; 32], 32).unwrap();
        assert!((z.re()[0] - 32.0).abs() < 1e-12);
        for k in 1..32 {
            assert!(z.re()[k].hypot(z.im()[k]) < 1e-9);
        }
    }

    #[test]
    fn complex_exponential_lands_in_one_bin() {
        // e^{2πik0n/N} is complex; the clip carries its real part cos(·), whose
        // DFT is N/2 at k0 and N−k0. Summing cos and the i·sin response (the
        // sin clip rotated by i) recovers the complex exponential's DFT.
        let (n, k0) = (32usize, 5usize);
        let cosv: Vec<f64> = (0..n).map(|j| (2.0 * PI * (k0 * j) as f64 / n as f64).cos()).collect();
        let sinv: Vec<f64> = (0..n).map(|j| (2.0 * PI * (k0 * j) as f64 / n as f64).sin()).collect();
        let rect = vec![1.0; n];
        let zc = stft(&AudioClip::new(cosv, 8000).unwrap(), &rect, n).unwrap();
        let zs = stft(&AudioClip::new(sinv, 8000).unwrap(), &rect, n).unwrap();
        for k in 0..n {
            // DFT(cos) + i·DFT(sin)
            let re = zc.re()[k] - zs.im()[k];
            let im = zc.im()[k] + zs.re()[k];
            let expect = if k == k0 { n as f64 } else { 0.0 };
            assert!((re - expect).abs() < 1e-9 && im.abs() < 1e-9, "bin {k}: {re} {im}");
        }
    }

    #[test]
    fn window_longer_than_clip() {
        let clip = AudioClip::new(vec![0.0; 10], 8000).unwrap();
        assert!(matches!(
            stft(&clip, &[1.0; 11], 1),
            Err(DspError::ClipTooShort { len: 10, needed: 11 })
        ));
    }
}
