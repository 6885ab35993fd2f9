use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ctensor::ComplexTensor;
use crate::dsp::CqtConfig;
use crate::nn::ModelConfig;

const F: usize = 16;
const T: usize = 24;

fn cqt16() -> CqtConfig {
    CqtConfig {
        n_bins: F,
        ..CqtConfig::default()
    }
}

fn spec(seed: u64) -> ComplexSpectrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = F * T;
    let re = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let im = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ComplexSpectrogram {
        data: ComplexTensor::new(&[F, T], re, im).unwrap(),
        config: cqt16(),
        phase_mode: PhaseMode::Full,
    }
}

/// Tiny model with running statistics from a two-item batch.
fn model(seed: u64) -> Model {
    let mut m = Model::new(ModelConfig::tiny(), cqt16(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let (a, b) = (spec(seed + 100), spec(seed + 200));
    let x = stack_batch(&[&a, &b]).unwrap();
    let opts = PassOptions {
        batch_stats: true,
        ..PassOptions::eval()
    };
    let r = m.run(&x, Objective::None, opts).unwrap();
    m.update_running(&r.batch_stats);
    m
}

fn target_value(m: &Model, s: &ComplexSpectrogram, class: usize) -> f64 {
    let x = stack_batch(&[s]).unwrap();
    let r = m.run(&x, Objective::LogitMagnitude(class), PassOptions::eval()).unwrap();
    r.objective.unwrap()
}

#[test]
fn saliency_matches_finite_differences() {
    for seed in 0..3 {
        let m = model(seed);
        let s = spec(seed);
        for class in [0, 1] {
            let map = saliency(&m, &s, class).unwrap();
            assert_eq!((map.n_bins, map.n_frames), (F, T));
            assert!(map.values.iter().all(|v| *v >= 0.0));
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
            let h = 1e-6;
            for _ in 0..10 {
                let i = rng.random_range(0..F * T);
                let mut partial = [0.0; 2];
                for (plane, d) in partial.iter_mut().enumerate() {
                    let mut plus = s.clone();
                    let mut minus = s.clone();
                    if plane == 0 {
                        plus.data.re_mut()[i] += h;
                        minus.data.re_mut()[i] -= h;
                    } else {
                        plus.data.im_mut()[i] += h;
                        minus.data.im_mut()[i] -= h;
                    }
                    *d = (target_value(&m, &plus, class) - target_value(&m, &minus, class)) / (2.0 * h);
                }
                let fd = partial[0].hypot(partial[1]);
                let an = map.values[i];
                assert!(
                    (fd - an).abs() <= 1e-3 * fd.max(an) || (fd - an).abs() < 1e-9,
                    "bin {i}: analytic {an} vs finite difference {fd}"
                );
            }
        }
    }
}

#[test]
fn degenerate_smoothgrad_is_plain_saliency() {
    let (m, s) = (model(4), spec(4));
    let plain = saliency(&m, &s, 1).unwrap();
    let params = SmoothGradParams {
        n_samples: 1,
        sigma: 0.0,
        seed: 9,
    };
    let sg = smoothgrad(&m, &s, 1, &params).unwrap();
    assert_eq!(sg.values, plain.values);
}

#[test]
fn smoothgrad_is_mean_of_samples() {
    let (m, s) = (model(5), spec(5));
    let params = SmoothGradParams {
        n_samples: 3,
        sigma: 0.2,
        seed: 11,
    };
    let sg = smoothgrad(&m, &s, 0, &params).unwrap();
    let peak = s.data.magnitudes().into_iter().fold(0.0, f64::max);
    let dist = Normal::new(0.0, 0.2 * peak).unwrap();
    let mut mean = vec![0.0; F * T];
    for i in 0..3u64 {
        let mut noisy = s.clone();
        let mut rng = seeds::rng(11, &[i]);
        for v in noisy.data.re_mut() {
            *v += dist.sample(&mut rng);
        }
        for v in noisy.data.im_mut() {
            *v += dist.sample(&mut rng);
        }
        for (a, b) in mean.iter_mut().zip(saliency(&m, &noisy, 0).unwrap().values) {
            *a += b / 3.0;
        }
    }
    for (a, b) in sg.values.iter().zip(&mean) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

fn median_spread(m: &Model, s: &ComplexSpectrogram, n: usize) -> f64 {
    let runs: Vec<Vec<f64>> = (0..20)
        .map(|r| {
            let p = SmoothGradParams {
                n_samples: n,
                sigma: 0.1,
                seed: 1000 + r,
            };
            smoothgrad(m, s, 1, &p).unwrap().values
        })
        .collect();
    let mut sds: Vec<f64> = (0..F * T)
        .map(|i| {
            let mu = runs.iter().map(|r| r[i]).sum::<f64>() / 20.0;
            (runs.iter().map(|r| (r[i] - mu).powi(2)).sum::<f64>() / 19.0).sqrt()
        })
        .collect();
    sds.sort_by(f64::total_cmp);
    sds[sds.len() / 2]
}

#[test]
fn averaging_reduces_spread() {
    let (m, s) = (model(6), spec(6));
    let one = median_spread(&m, &s, 1);
    let many = median_spread(&m, &s, 32);
    assert!(many < one, "N=32 spread {many} not below N=1 spread {one}");
}

#[test]
fn zero_final_layer_gives_zero_map() {
    let mut m = model(7);
    let names: Vec<String> = m.params().iter().map(|p| p.name.clone()).collect();
    for (p, name) in m.params_mut().into_iter().zip(&names) {
        if name.starts_with("lin2.") {
            p.re_mut().fill(0.0);
            p.im_mut().fill(0.0);
        }
    }
    let map = saliency(&m, &spec(7), 1).unwrap();
    assert!(map.values.iter().all(|v| *v == 0.0));
}

#[test]
fn rejects_ablated_input_and_bad_params() {
    let m = model(8);
    let mut s = spec(8);
    s.phase_mode = PhaseMode::Zero;
    assert!(matches!(saliency(&m, &s, 0), Err(ExplainError::PhaseMode(PhaseMode::Zero))));
    let p = SmoothGradParams {
        n_samples: 0,
        ..Default::default()
    };
    assert!(smoothgrad(&m, &spec(8), 0, &p).is_err());
    assert!(matches!(saliency(&m, &spec(8), 2), Err(ExplainError::TargetClass(2))));
}

fn sample_map() -> SaliencyMap {
    SaliencyMap {
        values: (0..12).map(|i| (i as f64).sqrt() / 3.0).collect(),
        n_bins: 3,
        n_frames: 4,
        clip_id: "x".into(),
        target_class: 1,
        n_samples: 1,
        sigma: 0.0,
    }
}

#[test]
fn pgm_layout() {
    let map = sample_map();
    let mut out = Vec::new();
    write_pgm(&map, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let tokens: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(&tokens[..4], ["P2", "4", "3", "255"]);
    let pixels: Vec<u32> = tokens[4..].iter().map(|t| t.parse().unwrap()).collect();
    assert_eq!(pixels.len(), 12);
    // top row is the highest bin, whose last cell is the maximum
    assert_eq!(pixels[3], 255);
    // bottom-left is bin 0, frame 0, the minimum
    assert_eq!(pixels[8], 0);

    let flat = SaliencyMap {
        values: vec![0.7; 12],
        ..map
    };
    let mut out = Vec::new();
    write_pgm(&flat, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.split_whitespace().skip(4).all(|t| t == "0"));
}

#[test]
fn csv_round_trip() {
    let map = sample_map();
    let mut out = Vec::new();
    write_csv(&map, &mut out).unwrap();
    let text = String::from_utf8(out.clone()).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert_eq!(text.lines().next(), Some("k,t,value"));
    let back = read_csv(std::io::Cursor::new(out)).unwrap();
    assert_eq!(back.values, map.values);
    assert_eq!((back.n_bins, back.n_frames), (3, 4));
    assert!(read_csv(std::io::Cursor::new("k,t,value\n0,0,1\n1,1,2\n")).is_err());
    assert!(matches!(read_csv(std::io::Cursor::new("a,b\n")), Err(ExplainError::Parse { line: 1, .. })));
}

#[test]
fn export_writes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let map = sample_map();
    for f in [MapFormat::Pgm, MapFormat::Csv] {
        let p = dir.path().join(format!("m.{f}"));
        export_map(&map, &p, f).unwrap();
        assert!(std::fs::metadata(&p).unwrap().len() > 0);
    }
    assert!(export_map(&map, &dir.path().join("missing/m.pgm"), MapFormat::Pgm).is_err());
}
