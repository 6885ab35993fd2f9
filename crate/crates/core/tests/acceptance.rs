//! Acceptance suite: one PASS/FAIL line per criterion on stdout.
//!
//! Run everything with `cargo test -p ccqt --test acceptance`. Pass criterion
//! numbers (`-- 1 3 7`) to run a subset.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ccqt::ctensor::{ComplexTensor, Graph, Var};
use ccqt::dsp::{cqt, cqt_direct, reflect_index, write_wav, AudioClip, ComplexSpectrogram, CqtConfig, PhaseMode, TrimConfig};
use ccqt::eval::{ablation_suite, compute_eer, score, write_report_csv, EvalOptions, ScoreEntry, ScoreSet};
use ccqt::explain::{saliency, smoothgrad, write_csv, write_pgm, SmoothGradParams};
use ccqt::nn::{Model, ModelCheckpoint, ModelConfig, Objective, PassOptions, Pooling};
use ccqt::train::{
    load_corpus, split_by_group, synth_dataset, train_loop, AugmentationConfig, SyntheticDatasetSpec, TrainConfig,
};

const PER_OP_TOL: f64 = 1e-5;
const END_TO_END_TOL: f64 = 1e-4;
const CQT_TOL: f64 = 1e-9;
const EER_TOL: f64 = 1e-9;
const SALIENCY_TOL: f64 = 1e-3;
const FULL_PHASE_MAX_EER: f64 = 0.15;
const ZERO_PHASE_MARGIN: f64 = 0.15;
const SEEDS: u64 = 20;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> ComplexTensor {
    let n: usize = shape.iter().product();
    let re = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let im = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ComplexTensor::new(shape, re, im).unwrap()
}

fn positive(shape: &[usize], rng: &mut ChaCha8Rng) -> ComplexTensor {
    let n: usize = shape.iter().product();
    let re = (0..n).map(|_| rng.random_range(0.2..1.5)).collect();
    ComplexTensor::new(shape, re, vec![0.0; n]).unwrap()
}

// ---------------------------------------------------------------- 1

type Build = dyn Fn(&mut Graph, &[Var]) -> Var;

/// `Re Σ conj(r)·y`, or `y` itself when it is already a real scalar.
fn loss(g: &mut Graph, y: Var, r: Option<&ComplexTensor>) -> Var {
    match r {
        None => y,
        Some(r) => {
            let rv = g.constant(r.clone());
            let rc = g.conj(rv).unwrap();
            let p = g.mul(rc, y).unwrap();
            let s = g.sum(p).unwrap();
            g.real_part(s).unwrap()
        }
    }
}

fn forward(build: &Build, inputs: &[ComplexTensor], r: Option<&ComplexTensor>) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let y = build(&mut g, &vars);
    let l = loss(&mut g, y, r);
    g.value(l).re()[0]
}

/// Norm-wise relative error of analytic against central-difference gradients
/// over every real coordinate of every input.
fn gradcheck(build: &Build, inputs: Vec<ComplexTensor>, scalar_out: bool, rng: &mut ChaCha8Rng) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone().with_grad())).collect();
    let y = build(&mut g, &vars);
    let r = (!scalar_out).then(|| random(g.shape(y), rng));
    let l = loss(&mut g, y, r.as_ref());
    g.backward(l).unwrap();
    let h = 1e-6;
    let (mut diff, mut norm_a, mut norm_n) = (0.0, 0.0, 0.0);
    for (k, v) in vars.iter().enumerate() {
        let (gr, gi) = g.grad(*v).cloned().unwrap();
        for j in 0..inputs[k].len() {
            for plane in 0..2 {
                let bump = |d: f64| {
                    let mut p = inputs.clone();
                    if plane == 0 {
                        p[k].re_mut()[j] += d;
                    } else {
                        p[k].im_mut()[j] += d;
                    }
                    forward(build, &p, r.as_ref())
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = if plane == 0 { gr[j] } else { gi[j] };
                diff += (fd - an) * (fd - an);
                norm_a += an * an;
                norm_n += fd * fd;
            }
        }
    }
    let scale = norm_a.max(norm_n).sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

fn per_op_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Box<Build>, Vec<ComplexTensor>, bool)> {
    let stats_mean = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
    let stats_var = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
    let targets = vec![rng.random_range(0..3usize), rng.random_range(0..3usize)];
    vec![
        ("add", Box::new(|g: &mut Graph, v: &[Var]| g.add(v[0], v[1]).unwrap()), vec![random(&[3, 2], rng), random(&[3, 2], rng)], false),
        ("sub", Box::new(|g: &mut Graph, v: &[Var]| g.sub(v[0], v[1]).unwrap()), vec![random(&[4], rng), random(&[4], rng)], false),
        ("mul", Box::new(|g: &mut Graph, v: &[Var]| g.mul(v[0], v[1]).unwrap()), vec![random(&[5], rng), random(&[5], rng)], false),
        ("mul broadcast", Box::new(|g: &mut Graph, v: &[Var]| g.mul(v[0], v[1]).unwrap()), vec![random(&[5], rng), random(&[1], rng)], false),
        ("scale_by_real", Box::new(|g: &mut Graph, v: &[Var]| g.scale_by_real(v[0], v[1]).unwrap()), vec![random(&[4], rng), random(&[1], rng)], false),
        ("conj", Box::new(|g: &mut Graph, v: &[Var]| g.conj(v[0]).unwrap()), vec![random(&[4], rng)], false),
        ("magnitude", Box::new(|g: &mut Graph, v: &[Var]| g.magnitude(v[0]).unwrap()), vec![random(&[6], rng)], false),
        ("real_part", Box::new(|g: &mut Graph, v: &[Var]| g.real_part(v[0]).unwrap()), vec![random(&[3], rng)], false),
        ("sum", Box::new(|g: &mut Graph, v: &[Var]| g.sum(v[0]).unwrap()), vec![random(&[2, 3], rng)], false),
        ("mean", Box::new(|g: &mut Graph, v: &[Var]| g.mean(v[0]).unwrap()), vec![random(&[2, 3], rng)], false),
        ("reshape", Box::new(|g: &mut Graph, v: &[Var]| g.reshape(v[0], &[3, 2]).unwrap()), vec![random(&[2, 3], rng)], false),
        ("matmul", Box::new(|g: &mut Graph, v: &[Var]| g.matmul(v[0], v[1]).unwrap()), vec![random(&[2, 3], rng), random(&[3, 4], rng)], false),
        ("crelu", Box::new(|g: &mut Graph, v: &[Var]| g.crelu(v[0]).unwrap()), vec![random(&[8], rng)], false),
        (
            "conv2d k3 s2 p1",
            Box::new(|g: &mut Graph, v: &[Var]| g.conv2d(v[0], v[1], Some(v[2]), 2, 1).unwrap()),
            vec![random(&[2, 2, 5, 6], rng), random(&[3, 2, 3, 3], rng), random(&[3], rng)],
            false,
        ),
        (
            "conv2d k3 s1 p0",
            Box::new(|g: &mut Graph, v: &[Var]| g.conv2d(v[0], v[1], None, 1, 0).unwrap()),
            vec![random(&[1, 2, 4, 5], rng), random(&[2, 2, 3, 3], rng)],
            false,
        ),
        (
            "batchnorm (batch statistics)",
            Box::new(|g: &mut Graph, v: &[Var]| g.batchnorm(v[0], v[1], v[2], 1e-5, None).unwrap().0),
            vec![random(&[3, 2, 2, 3], rng), random(&[2], rng), random(&[2], rng)],
            false,
        ),
        (
            "batchnorm (fixed statistics)",
            Box::new(move |g: &mut Graph, v: &[Var]| {
                let fixed = (&stats_mean[..], &stats_mean[..], &stats_var[..]);
                g.batchnorm(v[0], v[1], v[2], 1e-5, Some(fixed)).unwrap().0
            }),
            vec![random(&[2, 2, 3], rng), random(&[2], rng), random(&[2], rng)],
            false,
        ),
        (
            "linear_time",
            Box::new(|g: &mut Graph, v: &[Var]| g.linear_time(v[0], v[1], Some(v[2])).unwrap()),
            vec![random(&[2, 3, 4], rng), random(&[2, 3], rng), random(&[2], rng)],
            false,
        ),
        ("mean_last_axis", Box::new(|g: &mut Graph, v: &[Var]| g.mean_last_axis(v[0]).unwrap()), vec![random(&[2, 3, 4], rng)], false),
        (
            "log_compress",
            Box::new(|g: &mut Graph, v: &[Var]| g.log_compress(v[0], v[1], v[2], 1e-3).unwrap()),
            vec![random(&[3, 4], rng), positive(&[1], rng), ComplexTensor::scalar(rng.random_range(-0.3..0.3), 0.0)],
            false,
        ),
        (
            "softmax_cross_entropy",
            Box::new(move |g: &mut Graph, v: &[Var]| {
                let re = g.real_part(v[0]).unwrap();
                g.softmax_cross_entropy(re, &targets).unwrap()
            }),
            vec![random(&[2, 3], rng)],
            true,
        ),
    ]
}

fn tiny_cqt() -> CqtConfig {
    CqtConfig {
        n_bins: 16,
        ..CqtConfig::default()
    }
}

fn end_to_end_error(m: &Model, x: &ComplexTensor, targets: &[usize], batch_stats: bool) -> f64 {
    let opts = |grads| PassOptions {
        batch_stats,
        dropout: None,
        param_grads: grads,
        input_grad: false,
    };
    let r = m.run(x, Objective::CrossEntropy(targets), opts(true)).unwrap();
    let h = 1e-6;
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for (pi, (gre, gim)) in r.param_grads.iter().enumerate() {
        for plane in 0..2 {
            for j in 0..gre.len() {
                let eval = |delta: f64| {
                    let mut mm = m.clone();
                    let t = mm.params_mut().swap_remove(pi);
                    if plane == 0 {
                        t.re_mut()[j] += delta;
                    } else {
                        t.im_mut()[j] += delta;
                    }
                    mm.run(x, Objective::CrossEntropy(targets), opts(false)).unwrap().objective.unwrap()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = if plane == 0 { gre[j] } else { gim[j] };
                diff += (fd - an) * (fd - an);
                na += an * an;
                nn += fd * fd;
            }
        }
    }
    diff.sqrt() / na.max(nn).sqrt().max(1e-300)
}

/// Tiny model with running statistics from a training-mode pass over `x`.
fn tiny_model(seed: u64, x: &ComplexTensor) -> Model {
    let mut m = Model::new(ModelConfig::tiny(), tiny_cqt(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let r = m
        .run(x, Objective::None, PassOptions { batch_stats: true, ..PassOptions::eval() })
        .unwrap();
    m.update_running(&r.batch_stats);
    m
}

fn criterion_1() -> Outcome {
    let mut worst_op = (0.0f64, "");
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, build, inputs, scalar) in per_op_cases(&mut rng) {
            let e = gradcheck(build.as_ref(), inputs, scalar, &mut rng);
            ensure(e < PER_OP_TOL, || format!("{name}, seed {seed}: relative error {e:.3e}"))?;
            if e > worst_op.0 {
                worst_op = (e, name);
            }
        }
    }
    let mut worst_e2e = 0.0f64;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        // a single 16x16 item leaves one value per channel after four stride-2
        // blocks, so batch statistics need two items; one item runs on running statistics
        let pair = random(&[2, 1, 16, 16], &mut rng);
        let m = tiny_model(seed, &pair);
        let one = random(&[1, 1, 16, 16], &mut rng);
        let e1 = end_to_end_error(&m, &one, &[seed as usize % 2], false);
        let e2 = end_to_end_error(&m, &pair, &[0, 1], true);
        ensure(e1 < END_TO_END_TOL && e2 < END_TO_END_TOL, || {
            format!("end-to-end seed {seed}: {e1:.3e} (1x1x16x16, running stats), {e2:.3e} (2x1x16x16, batch stats)")
        })?;
        worst_e2e = worst_e2e.max(e1).max(e2);
    }
    Ok(format!(
        "{SEEDS} seeds; worst per-op {:.1e} ({}) < {PER_OP_TOL:.0e}, worst end-to-end {worst_e2e:.1e} < {END_TO_END_TOL:.0e}",
        worst_op.0, worst_op.1
    ))
}

// ---------------------------------------------------------------- 2

/// Per-bin, per-frame loop written from the transform's definition.
fn naive_cqt(x: &[f64], c: &CqtConfig) -> Vec<(f64, f64)> {
    let q = 1.0 / (2f64.powf(1.0 / c.bins_per_octave as f64) - 1.0);
    let frames = (x.len() - 1) / c.hop + 1;
    let mut out = Vec::with_capacity(c.n_bins * frames);
    for k in 0..c.n_bins {
        let fk = c.f_min * 2f64.powf(k as f64 / c.bins_per_octave as f64);
        let nk = (q * c.sample_rate as f64 / fk).ceil() as usize;
        for t in 0..frames {
            let (mut sr, mut si) = (0.0, 0.0);
            for n in 0..nk {
                let idx = reflect_index((t * c.hop + n) as isize - (nk / 2) as isize, x.len());
                let w = 0.5 * (1.0 - (2.0 * PI * n as f64 / nk as f64).cos());
                let arg = -2.0 * PI * q * n as f64 / nk as f64;
                sr += x[idx] * w * arg.cos();
                si += x[idx] * w * arg.sin();
            }
            out.push((sr / nk as f64, si / nk as f64));
        }
    }
    out
}

fn criterion_2() -> Outcome {
    let c = CqtConfig {
        sample_rate: 8000,
        f_min: 110.0,
        bins_per_octave: 12,
        n_bins: 36,
        hop: 32,
    };
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.random_range(c.max_window_len()..c.max_window_len() + 800);
        let clip = AudioClip::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), c.sample_rate).unwrap();
        let direct = cqt_direct(&clip, &c).map_err(|e| e.to_string())?;
        let fast = cqt(&clip, &c).map_err(|e| e.to_string())?;
        let oracle = naive_cqt(clip.samples(), &c);
        ensure(direct.data.len() == oracle.len(), || format!("clip {seed}: frame count differs from the oracle"))?;
        for (i, (or, oi)) in oracle.iter().enumerate() {
            for s in [&direct, &fast] {
                let (r, im) = s.data.get(i);
                worst = worst.max((r - or).abs()).max((im - oi).abs());
            }
        }
        ensure(worst < CQT_TOL, || format!("clip {seed}: deviation {worst:.3e} from the naive loop"))?;
    }
    // a tone at each bin's centre frequency peaks in that bin
    let c16 = CqtConfig::default();
    let n = c16.max_window_len() + 4000;
    for k in 0..c16.n_bins {
        let f = c16.center_freq(k);
        let clip = AudioClip::new(
            (0..n).map(|i| 0.5 * (2.0 * PI * f * i as f64 / c16.sample_rate as f64).sin()).collect(),
            c16.sample_rate,
        )
        .unwrap();
        let s = cqt(&clip, &c16).map_err(|e| e.to_string())?;
        let t = s.n_frames() / 2;
        let best = (0..s.n_bins())
            .max_by(|&a, &b| {
                let m = |k: usize| {
                    let (r, i) = s.data.get(k * s.n_frames() + t);
                    r.hypot(i)
                };
                m(a).total_cmp(&m(b))
            })
            .unwrap();
        ensure(best == k, || format!("tone at bin {k} ({f:.1} Hz) peaks in bin {best}"))?;
    }
    Ok(format!(
        "50 random clips, max deviation {worst:.1e} < {CQT_TOL:.0e}; tone localisation holds for all {} bins",
        c16.n_bins
    ))
}

// ---------------------------------------------------------------- 3

/// FAR and FRR at every midpoint between consecutive distinct scores (and
/// beyond both ends), taking the crossing of the two curves.
fn brute_force_eer(spoof: &[f64], bona: &[f64]) -> f64 {
    let mut all: Vec<f64> = spoof.iter().chain(bona).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut ts = vec![all[0] - 1.0];
    ts.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    ts.push(all[all.len() - 1] + 1.0);
    let far = |t: f64| spoof.iter().filter(|&&s| s < t).count() as f64 / spoof.len() as f64;
    let frr = |t: f64| bona.iter().filter(|&&s| s >= t).count() as f64 / bona.len() as f64;
    let pts: Vec<(f64, f64)> = ts.iter().map(|&t| (far(t), frr(t))).collect();
    let i = pts.iter().position(|(a, r)| a >= r).unwrap();
    if i == 0 || pts[i].0 == pts[i].1 {
        return 0.5 * (pts[i].0 + pts[i].1);
    }
    let (a0, r0) = pts[i - 1];
    let (a1, r1) = pts[i];
    let s = (r0 - a0) / ((a1 - a0) - (r1 - r0));
    a0 + s * (a1 - a0)
}

fn set(spoof: &[f64], bona: &[f64]) -> ScoreSet {
    let mut s = ScoreSet::default();
    for (i, v) in spoof.iter().enumerate() {
        s.entries.push(ScoreEntry::new(format!("s{i}"), 1, *v));
    }
    for (i, v) in bona.iter().enumerate() {
        s.entries.push(ScoreEntry::new(format!("b{i}"), 0, *v));
    }
    s
}

fn criterion_3() -> Outcome {
    let fixed = [
        (vec![0.9, 0.8], vec![0.2, 0.1], 0.0),
        (vec![0.9, 0.2], vec![0.8, 0.1], 0.5),
        (vec![0.1, 0.2], vec![0.8, 0.9], 1.0),
    ];
    for (spoof, bona, want) in &fixed {
        let got = compute_eer(&set(spoof, bona)).map_err(|e| e.to_string())?.eer;
        ensure((got - want).abs() < EER_TOL, || format!("spoof {spoof:?} bona {bona:?}: EER {got}, want {want}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = rng.random_range(2..=200usize);
        let n_spoof = rng.random_range(1..n);
        // coarse grids produce ties on purpose
        let levels = rng.random_range(2..50u32);
        let mut draw = || rng.random_range(0..=levels) as f64 / levels as f64;
        let spoof: Vec<f64> = (0..n_spoof).map(|_| draw()).collect();
        let bona: Vec<f64> = (0..n - n_spoof).map(|_| draw()).collect();
        let got = compute_eer(&set(&spoof, &bona)).map_err(|e| e.to_string())?.eer;
        let want = brute_force_eer(&spoof, &bona);
        worst = worst.max((got - want).abs());
        ensure(worst < EER_TOL, || format!("set {i}: EER {got} vs oracle {want}"))?;
    }
    Ok(format!("3 fixed examples exact; 1000 random sets, max deviation {worst:.1e} < {EER_TOL:.0e}"))
}

// ---------------------------------------------------------------- 4 and 6

struct PhaseRun {
    history_csv: Vec<u8>,
    checkpoint: Vec<u8>,
    eer: [f64; 3],
    epochs: usize,
}

fn phase_experiment() -> Result<PhaseRun, String> {
    let spec = SyntheticDatasetSpec {
        n_pairs: 400,
        duration_s: 2.0,
        sample_rate: 16000,
        seed: 1,
        ..SyntheticDatasetSpec::default()
    };
    let clips = synth_dataset(&spec).map_err(|e| e.to_string())?;
    let (rest, test) = split_by_group(&clips, 0.2, 1);
    let (train, val) = split_by_group(&rest, 0.2, 2);
    let cfg = TrainConfig {
        seed: 1,
        ..TrainConfig::default()
    };
    let model = Model::new(ModelConfig::default(), CqtConfig::default(), &mut ccqt::seeds::rng(1, &[u64::MAX]))
        .map_err(|e| e.to_string())?;
    let out = train_loop(model, &train, &val, &cfg, &AugmentationConfig::default(), &TrimConfig::default())
        .map_err(|e| e.to_string())?;
    let mut history_csv = Vec::new();
    out.history.write_csv(&mut history_csv).unwrap();
    let checkpoint = ModelCheckpoint::from_model(&out.model).to_bytes();
    let opts = EvalOptions {
        seed: 1,
        ..EvalOptions::default()
    };
    let report = ablation_suite(&out.model, &test, &opts).map_err(|e| e.to_string())?;
    let e = |m| report.eer(m).unwrap();
    Ok(PhaseRun {
        history_csv,
        checkpoint,
        eer: [e(PhaseMode::Full), e(PhaseMode::Zero), e(PhaseMode::Random)],
        epochs: out.history.records.len(),
    })
}

fn criterion_4(run: &PhaseRun) -> Outcome {
    let [full, zero, random] = run.eer;
    let detail = format!(
        "EER full {:.2}%, zero {:.2}%, random {:.2}% on the held-out 20% after {} epochs",
        100.0 * full,
        100.0 * zero,
        100.0 * random,
        run.epochs
    );
    ensure(full <= FULL_PHASE_MAX_EER, || format!("{detail}; full-phase EER exceeds {FULL_PHASE_MAX_EER}"))?;
    ensure(zero >= full + ZERO_PHASE_MARGIN, || {
        format!("{detail}; zero-phase EER is not {ZERO_PHASE_MARGIN} above full")
    })?;
    Ok(detail)
}

fn criterion_6(first: &PhaseRun, second: &PhaseRun) -> Outcome {
    ensure(first.history_csv == second.history_csv, || "history CSV differs between runs".into())?;
    ensure(first.checkpoint == second.checkpoint, || "checkpoint bytes differ between runs".into())?;
    Ok(format!(
        "history ({} bytes) and checkpoint ({} bytes) identical across two runs",
        first.history_csv.len(),
        first.checkpoint.len()
    ))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    std::fs::create_dir_all(root.join("audio/a")).unwrap();
    std::fs::create_dir_all(root.join("audio/b")).unwrap();
    let spec = SyntheticDatasetSpec {
        n_pairs: 20,
        duration_s: 0.8,
        n_harmonics: 3,
        seed: 5,
        ..SyntheticDatasetSpec::default()
    };
    let mut manifest = String::from("# user corpus\n");
    for (i, c) in synth_dataset(&spec).map_err(|e| e.to_string())?.iter().enumerate() {
        // pad with silence so trimming has work to do
        let mut s = vec![0.0; 1600];
        s.extend_from_slice(c.clip.samples());
        s.extend(std::iter::repeat_n(0.0, 800));
        let rel = format!("audio/{}/clip{i:03}.wav", if c.label == 0 { "a" } else { "b" });
        write_wav(root.join(&rel), &AudioClip::new(s, 16000).unwrap()).map_err(|e| e.to_string())?;
        manifest.push_str(&format!("{rel},{}\n", c.label));
    }
    let mpath = root.join("manifest.csv");
    std::fs::write(&mpath, manifest).unwrap();
    let clips = load_corpus(&mpath).map_err(|e| e.to_string())?;
    ensure(clips.len() == 40, || format!("{} clips loaded", clips.len()))?;
    let (train, held) = split_by_group(&clips, 0.4, 1);
    let (val, test) = split_by_group(&held, 0.5, 2);
    let cfg = TrainConfig {
        batch_size: 4,
        max_epochs: 2,
        duration_s: 0.8,
        ..TrainConfig::default()
    };
    let mc = ModelConfig {
        conv_channels: vec![2, 2, 2, 2],
        linear_widths: vec![4, 4, 2],
        pooling: Pooling::Mean,
        ..ModelConfig::default()
    };
    let model = Model::new(mc, CqtConfig::default(), &mut ChaCha8Rng::seed_from_u64(5)).map_err(|e| e.to_string())?;
    let out = train_loop(model, &train, &val, &cfg, &AugmentationConfig::default(), &TrimConfig::default())
        .map_err(|e| e.to_string())?;
    let opts = EvalOptions {
        duration_s: 0.8,
        ..EvalOptions::default()
    };
    let scores = score(&out.model, &test, PhaseMode::Full, &opts).map_err(|e| e.to_string())?;
    let mut score_csv = Vec::new();
    scores.write_csv(&mut score_csv).unwrap();
    let r = compute_eer(&scores).map_err(|e| e.to_string())?;
    let mut report_csv = Vec::new();
    write_report_csv(&[(PhaseMode::Full, r)], &mut report_csv).unwrap();

    // schema checks
    let text = String::from_utf8(score_csv).unwrap();
    let mut lines = text.lines();
    ensure(lines.next() == Some("clip_id,label,score"), || "score header".into())?;
    let mut rows = 0;
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        ensure(f.len() == 3, || format!("score row `{l}`"))?;
        ensure(test.iter().any(|c| c.id == f[0]), || format!("unknown clip id `{}`", f[0]))?;
        ensure(matches!(f[1], "0" | "1"), || format!("label `{}`", f[1]))?;
        let v: f64 = f[2].parse().map_err(|_| format!("score `{}`", f[2]))?;
        ensure((0.0..=1.0).contains(&v), || format!("score {v} outside [0, 1]"))?;
        rows += 1;
    }
    ensure(rows == test.len(), || format!("{rows} score rows for {} clips", test.len()))?;
    let text = String::from_utf8(report_csv).unwrap();
    let mut lines = text.lines();
    ensure(lines.next() == Some("mode,eer,threshold,n_bona_fide,n_spoof"), || "report header".into())?;
    let f: Vec<&str> = lines.next().ok_or("missing report row")?.split(',').collect();
    ensure(f.len() == 5 && f[0] == "full", || format!("report row {f:?}"))?;
    let eer: f64 = f[1].parse().map_err(|_| "eer field".to_string())?;
    ensure((0.0..=1.0).contains(&eer), || format!("EER {eer}"))?;
    let counts: usize = f[3].parse::<usize>().unwrap_or(0) + f[4].parse::<usize>().unwrap_or(0);
    ensure(counts == test.len(), || "report counts".into())?;
    Ok(format!(
        "40-clip WAV corpus: trained {} epochs, {} score rows and report validated",
        out.history.records.len(),
        rows
    ))
}

// ---------------------------------------------------------------- 7

fn spectrogram(seed: u64, f: usize, t: usize) -> ComplexSpectrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexSpectrogram {
        data: random(&[f, t], &mut rng),
        config: tiny_cqt(),
        phase_mode: PhaseMode::Full,
    }
}

fn target(m: &Model, s: &ComplexSpectrogram, class: usize) -> f64 {
    let x = s.data.clone().reshape(&[1, 1, s.n_bins(), s.n_frames()]).unwrap();
    m.run(&x, Objective::LogitMagnitude(class), PassOptions::eval()).unwrap().objective.unwrap()
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = tiny_model(seed, &random(&[2, 1, 16, 20], &mut rng));
        let s = spectrogram(seed + 50, 16, 20);
        let class = seed as usize % 2;
        let plain = saliency(&m, &s, class).map_err(|e| e.to_string())?;
        let params = SmoothGradParams {
            n_samples: 1,
            sigma: 0.0,
            seed,
        };
        let sg = smoothgrad(&m, &s, class, &params).map_err(|e| e.to_string())?;
        ensure(
            sg.values.iter().zip(&plain.values).all(|(a, b)| a.to_bits() == b.to_bits()),
            || format!("seed {seed}: smoothgrad(N=1, sigma=0) differs from saliency"),
        )?;
        let h = 1e-6;
        for _ in 0..10 {
            let i = rng.random_range(0..s.data.len());
            let mut d = [0.0; 2];
            for (plane, v) in d.iter_mut().enumerate() {
                let bump = |delta: f64| {
                    let mut p = s.clone();
                    if plane == 0 {
                        p.data.re_mut()[i] += delta;
                    } else {
                        p.data.im_mut()[i] += delta;
                    }
                    target(&m, &p, class)
                };
                *v = (bump(h) - bump(-h)) / (2.0 * h);
            }
            let fd = d[0].hypot(d[1]);
            let an = plain.values[i];
            let rel = if fd.max(an) > 0.0 { (fd - an).abs() / fd.max(an) } else { 0.0 };
            worst = worst.max(rel);
            ensure(rel < SALIENCY_TOL, || format!("seed {seed}, bin {i}: saliency {an} vs finite difference {fd}"))?;
        }
        // export grammars
        let mut pgm = Vec::new();
        write_pgm(&plain, &mut pgm).unwrap();
        let text = String::from_utf8(pgm).unwrap();
        let tok: Vec<&str> = text.split_whitespace().collect();
        ensure(tok.len() == 4 + 16 * 20, || format!("PGM has {} tokens", tok.len()))?;
        ensure(tok[..4] == ["P2", "20", "16", "255"], || format!("PGM header {:?}", &tok[..4]))?;
        ensure(tok[4..].iter().all(|t| t.parse::<u32>().is_ok_and(|v| v <= 255)), || "PGM pixel out of range".into())?;
        let mut csv = Vec::new();
        write_csv(&plain, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        ensure(lines.next() == Some("k,t,value"), || "CSV header".into())?;
        let mut n = 0;
        for l in lines {
            let f: Vec<&str> = l.split(',').collect();
            let ok = f.len() == 3
                && f[0].parse::<usize>().is_ok_and(|k| k < 16)
                && f[1].parse::<usize>().is_ok_and(|t| t < 20)
                && f[2].parse::<f64>().is_ok_and(|v| v >= 0.0 && v.is_finite());
            ensure(ok, || format!("CSV row `{l}`"))?;
            n += 1;
        }
        ensure(n == 16 * 20, || format!("CSV has {n} rows"))?;
    }
    Ok(format!(
        "5 models: smoothgrad(N=1, sigma=0) bit-identical to saliency; 50 sampled bins within {worst:.1e} < {SALIENCY_TOL:.0e}; PGM and CSV grammars hold"
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let mut total = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut channels: Vec<usize> = (0..4).map(|_| rng.random_range(1..5)).collect();
        channels.sort_unstable();
        let widths = vec![rng.random_range(2..6), rng.random_range(2..6), 2];
        let mc = ModelConfig {
            conv_channels: channels,
            linear_widths: widths,
            pooling: if seed % 2 == 0 { Pooling::Mean } else { Pooling::MagnitudeMax },
            ..ModelConfig::default()
        };
        let mut m = Model::new(mc, tiny_cqt(), &mut rng).map_err(|e| e.to_string())?;
        if seed % 3 != 0 {
            let x = random(&[2, 1, 16, 24], &mut rng);
            let r = m
                .run(&x, Objective::None, PassOptions { batch_stats: true, ..PassOptions::eval() })
                .map_err(|e| e.to_string())?;
            m.update_running(&r.batch_stats);
        }
        let a = ModelCheckpoint::from_model(&m).to_bytes();
        let loaded = ModelCheckpoint::from_bytes(&a).and_then(|c| c.to_model()).map_err(|e| e.to_string())?;
        let b = ModelCheckpoint::from_model(&loaded).to_bytes();
        ensure(a == b, || format!("model {seed}: re-saved checkpoint differs"))?;
        total += a.len();
    }
    Ok(format!("10 random models, save-load-save byte-identical ({total} bytes total)"))
}

// ----------------------------------------------------------------

fn report(n: u32, name: &str, started: Instant, outcome: &Outcome) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => println!("PASS  {n}. {name}: {d} [{secs:.1} s]"),
        Err(d) => println!("FAIL  {n}. {name}: {d} [{secs:.1} s]"),
    }
    outcome.is_ok()
}

fn main() {
    let picked: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| picked.is_empty() || picked.contains(&n);
    let mut ok = true;
    let simple: [(u32, &str, fn() -> Outcome); 6] = [
        (1, "gradient correctness", criterion_1),
        (2, "CQT oracle equivalence", criterion_2),
        (3, "EER oracle equivalence", criterion_3),
        (5, "user corpus pipeline", criterion_5),
        (7, "explainability", criterion_7),
        (8, "checkpoint serialization", criterion_8),
    ];
    for (n, name, f) in simple {
        if want(n) {
            let t = Instant::now();
            ok &= report(n, name, t, &f());
        }
    }
    if want(4) || want(6) {
        let t = Instant::now();
        let first = phase_experiment();
        let first_secs = t.elapsed();
        if want(4) {
            let outcome = first.as_ref().map_err(Clone::clone).and_then(criterion_4);
            ok &= report(4, "phase exploitation", t, &outcome);
        }
        if want(6) {
            let t2 = Instant::now();
            let second = phase_experiment();
            let outcome = match (&first, &second) {
                (Ok(a), Ok(b)) => criterion_6(a, b),
                (Err(e), _) | (_, Err(e)) => Err(e.clone()),
            };
            let label = format!("determinism (first run {:.0} s)", first_secs.as_secs_f64());
            ok &= report(6, &label, t2, &outcome);
        }
    }
    if !ok {
        std::process::exit(1);
    }
}
