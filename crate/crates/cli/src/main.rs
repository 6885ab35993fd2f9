//! `ccqt`: complex CQT anti-spoofing toolkit.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ccqt::dsp::{center_crop_or_pad, cqt, phase_ablate, trim_silence, write_wav, PhaseMode};
use ccqt::eval::{ablation_suite, compute_eer, report_text, score, write_report_csv, EvalOptions};
use ccqt::explain::{export_map, smoothgrad, MapFormat};
use ccqt::nn::{load_checkpoint, save_checkpoint, Model};
use ccqt::seeds;
use ccqt::train::{load_corpus, split_by_group, synth_dataset, train_loop, LabeledClip};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "ccqt", version, about = "Complex-valued CQT voice anti-spoofing")]
struct Cli {
    /// `section.key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// override one key, e.g. `--set train.max_epochs=5`
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// directory receiving every output file
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic paired dataset as WAV files plus a manifest
    SynthData,
    /// Write the complex CQT of each manifest clip as CSV
    Features(CorpusArgs),
    /// Split a corpus, train, and write the checkpoint and history
    Train(CorpusArgs),
    /// Score clips with a checkpoint and report the EER
    Eval(ModelArgs),
    /// Score clips under full, zero and random phase
    Ablate(ModelArgs),
    /// Write SmoothGrad saliency maps
    Explain(ExplainArgs),
    /// Print the effective configuration
    Config,
}

#[derive(Args)]
struct CorpusArgs {
    /// lines of `<path>,<label 0|1>[,<group>]`
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// clip id as written in the manifest; defaults to the first clip
    #[arg(long)]
    clip: Option<String>,
    /// 0 bona fide, 1 spoof
    #[arg(long, default_value_t = 1)]
    class: usize,
    /// pgm, csv or both
    #[arg(long, default_value = "both")]
    format: String,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<String> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Command::Config = cli.command {
        return Ok(cfg.render().trim_end().to_string());
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    match cli.command {
        Command::SynthData => synth_data(&cfg, out),
        Command::Features(a) => features(&cfg, out, &a.manifest),
        Command::Train(a) => train(&cfg, out, &a.manifest),
        Command::Eval(a) => eval(&cfg, out, &a),
        Command::Ablate(a) => ablate(&cfg, out, &a),
        Command::Explain(a) => explain(&cfg, out, &a),
        Command::Config => unreachable!(),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// File-name-safe form of a clip id.
fn stem(id: &str) -> String {
    let base = id.strip_suffix(".wav").unwrap_or(id);
    base.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn synth_data(cfg: &RunConfig, out: &Path) -> Result<String> {
    let clips = synth_dataset(&cfg.synth)?;
    let dir = out.join("data");
    fs::create_dir_all(&dir)?;
    let mut m = create(&dir.join("manifest.csv"))?;
    for c in &clips {
        let name = format!("{}.wav", c.id);
        write_wav(dir.join(&name), &c.clip)?;
        writeln!(m, "{name},{},pair{:05}", c.label, c.group)?;
    }
    m.flush()?;
    Ok(format!(
        "synth-data: wrote {} clips ({} pairs) and {}",
        clips.len(),
        cfg.synth.n_pairs,
        dir.join("manifest.csv").display()
    ))
}

fn load(manifest: &Path) -> Result<Vec<LabeledClip>> {
    load_corpus(manifest).with_context(|| format!("reading {}", manifest.display()))
}

fn features(cfg: &RunConfig, out: &Path, manifest: &Path) -> Result<String> {
    let clips = load(manifest)?;
    let dir = out.join("features");
    fs::create_dir_all(&dir)?;
    for c in &clips {
        let prepared = trim_silence(&c.clip, &cfg.trim)
            .and_then(|t| center_crop_or_pad(&t, cfg.train.duration_s))
            .with_context(|| format!("clip {}", c.id))?;
        let spec = cqt(&prepared, &cfg.cqt).with_context(|| format!("clip {}", c.id))?;
        let spec = phase_ablate(&spec, cfg.eval.phase_mode, &mut seeds::rng(cfg.eval.seed, &[]))?;
        let mut w = create(&dir.join(format!("{}.csv", stem(&c.id))))?;
        spec.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(format!("features: wrote {} spectrograms to {}", clips.len(), dir.display()))
}

fn write_manifest(path: &Path, root: &Path, clips: &[LabeledClip]) -> Result<()> {
    let mut w = create(path)?;
    for c in clips {
        let p = root.join(&c.id);
        let p = p.canonicalize().unwrap_or(p);
        writeln!(w, "{},{},g{}", p.display(), c.label, c.group)?;
    }
    w.flush()?;
    Ok(())
}

fn train(cfg: &RunConfig, out: &Path, manifest: &Path) -> Result<String> {
    let clips = load(manifest)?;
    let (rest, test) = split_by_group(&clips, cfg.split.test_fraction, cfg.split.seed);
    let (train_set, val) = split_by_group(&rest, cfg.split.val_fraction, cfg.split.seed.wrapping_add(1));
    if train_set.is_empty() || val.is_empty() {
        bail!(
            "{} clips leave an empty training or validation split; lower split.val_fraction or add clips",
            clips.len()
        );
    }
    log::info!("split: {} train, {} validation, {} test clips", train_set.len(), val.len(), test.len());
    let root = manifest.parent().unwrap_or(Path::new("."));
    let splits = out.join("splits");
    fs::create_dir_all(&splits)?;
    write_manifest(&splits.join("train.csv"), root, &train_set)?;
    write_manifest(&splits.join("val.csv"), root, &val)?;
    write_manifest(&splits.join("test.csv"), root, &test)?;

    let model = Model::new(cfg.model.clone(), cfg.cqt, &mut seeds::rng(cfg.train.seed, &[u64::MAX]))?;
    log::info!("model: {} real parameters", model.param_count());
    let outcome = train_loop(model, &train_set, &val, &cfg.train, &cfg.augment, &cfg.trim)?;
    save_checkpoint(&outcome.model, out.join("checkpoint.ccqt"))?;
    let mut h = create(&out.join("history.csv"))?;
    outcome.history.write_csv(&mut h)?;
    h.flush()?;
    fs::write(out.join("config.txt"), cfg.render())?;
    let h = &outcome.history;
    let best = h.records.iter().find(|r| r.epoch == h.best_epoch).or(h.records.last());
    Ok(match best {
        Some(r) => format!(
            "train: {} epochs, best epoch {} (val loss {:.4}, val EER {:.2}%), checkpoint {}",
            h.records.len(),
            r.epoch,
            r.val_loss,
            100.0 * r.val_eer,
            out.join("checkpoint.ccqt").display()
        ),
        None => "train: no epochs run".into(),
    })
}

fn eval_options(cfg: &RunConfig) -> EvalOptions {
    EvalOptions {
        trim: cfg.trim,
        duration_s: cfg.train.duration_s,
        seed: cfg.eval.seed,
        batch_size: cfg.eval.batch_size,
    }
}

fn load_model(path: &Path) -> Result<Model> {
    load_checkpoint(path).with_context(|| format!("loading {}", path.display()))
}

fn eval(cfg: &RunConfig, out: &Path, a: &ModelArgs) -> Result<String> {
    let model = load_model(&a.checkpoint)?;
    let clips = load(&a.manifest)?;
    let scores = score(&model, &clips, cfg.eval.phase_mode, &eval_options(cfg))?;
    let mut w = create(&out.join("scores.csv"))?;
    scores.write_csv(&mut w)?;
    w.flush()?;
    let r = compute_eer(&scores)?;
    let rows = [(cfg.eval.phase_mode, r)];
    let mut w = create(&out.join("report.csv"))?;
    write_report_csv(&rows, &mut w)?;
    w.flush()?;
    fs::write(out.join("report.txt"), report_text(&rows))?;
    Ok(format!(
        "eval: EER {:.2}% at threshold {:.4} over {} clips ({} phase)",
        100.0 * r.eer,
        r.threshold,
        clips.len(),
        cfg.eval.phase_mode
    ))
}

fn ablate(cfg: &RunConfig, out: &Path, a: &ModelArgs) -> Result<String> {
    let model = load_model(&a.checkpoint)?;
    let clips = load(&a.manifest)?;
    let report = ablation_suite(&model, &clips, &eval_options(cfg))?;
    for (mode, s) in &report.scores {
        let mut w = create(&out.join(format!("scores_{mode}.csv")))?;
        s.write_csv(&mut w)?;
        w.flush()?;
    }
    let mut w = create(&out.join("ablation.csv"))?;
    write_report_csv(&report.results, &mut w)?;
    w.flush()?;
    fs::write(out.join("ablation.txt"), report_text(&report.results))?;
    let parts: Vec<String> = report
        .results
        .iter()
        .map(|(m, r)| format!("{m} {:.2}%", 100.0 * r.eer))
        .collect();
    Ok(format!("ablate: EER {} over {} clips", parts.join(", "), clips.len()))
}

fn explain(cfg: &RunConfig, out: &Path, a: &ExplainArgs) -> Result<String> {
    let formats: Vec<MapFormat> = match a.format.as_str() {
        "both" => vec![MapFormat::Pgm, MapFormat::Csv],
        f => vec![f.parse().map_err(anyhow::Error::msg)?],
    };
    let model = load_model(&a.model.checkpoint)?;
    let clips = load(&a.model.manifest)?;
    let clip = match &a.clip {
        Some(id) => clips
            .iter()
            .find(|c| &c.id == id)
            .with_context(|| format!("clip `{id}` is not in the manifest"))?,
        None => &clips[0],
    };
    let prepared = trim_silence(&clip.clip, &cfg.trim).and_then(|t| center_crop_or_pad(&t, cfg.train.duration_s))?;
    let spec = cqt(&prepared, model.cqt())?;
    debug_assert_eq!(spec.phase_mode, PhaseMode::Full);
    let mut map = smoothgrad(&model, &spec, a.class, &cfg.explain)?;
    map.clip_id = clip.id.clone();
    let dir = out.join("saliency");
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for f in formats {
        let name = Path::new(&clip.id).file_stem().map_or_else(|| stem(&clip.id), |s| stem(&s.to_string_lossy()));
        let p = dir.join(format!("{name}_class{}.{f}", a.class));
        export_map(&map, &p, f)?;
        written.push(p.display().to_string());
    }
    Ok(format!(
        "explain: {} (N={}, sigma={}) -> {}",
        clip.id,
        cfg.explain.n_samples,
        cfg.explain.sigma,
        written.join(", ")
    ))
}
