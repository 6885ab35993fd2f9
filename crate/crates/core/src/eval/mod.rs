//! Scoring, equal error rate, and the phase-ablation harness.

mod eer;

pub use eer::{compute_eer, EerResult};

use std::fmt::Write as _;
use std::io::Write;

use thiserror::Error;

use crate::dsp::{cqt, phase_ablate, prepare_clip, stack_batch, DspError, PhaseMode, TrimConfig};
use crate::nn::{Model, NnError};
use crate::seeds;
use crate::train::LabeledClip;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("EER needs at least one bona fide and one spoof score")]
    SingleClass,
    #[error("score for `{0}` is not finite")]
    NonFiniteScore(String),
    #[error("clip `{id}`: {source}")]
    Clip { id: String, source: DspError },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub id: String,
    /// 0 bona fide, 1 spoof
    pub label: usize,
    /// spoof-class probability
    pub score: f64,
}

impl ScoreEntry {
    pub fn new(id: impl Into<String>, label: usize, score: f64) -> Self {
        Self {
            id: id.into(),
            label,
            score,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub entries: Vec<ScoreEntry>,
}

impl ScoreSet {
    /// CSV with header `clip_id,label,score`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "clip_id,label,score")?;
        for e in &self.entries {
            writeln!(w, "{},{},{:?}", e.id, e.label, e.score)?;
        }
        Ok(())
    }
}

/// How clips become model input at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub trim: TrimConfig,
    pub duration_s: f64,
    /// seeds the per-clip phase draws of `random` mode
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            trim: TrimConfig::default(),
            duration_s: 2.0,
            seed: 0,
            batch_size: 16,
        }
    }
}

/// Eval-mode spoof probabilities for `clips` under `mode`, using the
/// central window of each trimmed clip.
pub fn score(model: &Model, clips: &[LabeledClip], mode: PhaseMode, opts: &EvalOptions) -> Result<ScoreSet, EvalError> {
    let mut set = ScoreSet::default();
    for (chunk_i, chunk) in clips.chunks(opts.batch_size.max(1)).enumerate() {
        let mut specs = Vec::with_capacity(chunk.len());
        for (j, c) in chunk.iter().enumerate() {
            let index = (chunk_i * opts.batch_size.max(1) + j) as u64;
            let clip_err = |source| EvalError::Clip {
                id: c.id.clone(),
                source,
            };
            let prepared = prepare_clip::<rand_chacha::ChaCha8Rng>(&c.clip, &opts.trim, opts.duration_s, None)
                .map_err(clip_err)?;
            let spec = cqt(&prepared, model.cqt()).map_err(clip_err)?;
            let mut rng = seeds::rng(opts.seed, &[index]);
            specs.push(phase_ablate(&spec, mode, &mut rng)?);
        }
        let refs: Vec<_> = specs.iter().collect();
        let batch = stack_batch(&refs)?;
        let (_, probs) = model.predict(&batch)?;
        for (c, row) in chunk.iter().zip(probs.chunks(2)) {
            set.entries.push(ScoreEntry::new(c.id.clone(), c.label, row[1]));
        }
    }
    Ok(set)
}

/// EERs of the same clips under full, zero and random phase.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub results: Vec<(PhaseMode, EerResult)>,
    pub scores: Vec<(PhaseMode, ScoreSet)>,
}

impl AblationReport {
    pub fn eer(&self, mode: PhaseMode) -> Option<f64> {
        self.results.iter().find(|r| r.0 == mode).map(|r| r.1.eer)
    }

    /// Modes from lowest to highest EER.
    pub fn ordering(&self) -> Vec<PhaseMode> {
        let mut r = self.results.clone();
        r.sort_by(|a, b| a.1.eer.total_cmp(&b.1.eer));
        r.into_iter().map(|r| r.0).collect()
    }
}

pub fn ablation_suite(model: &Model, clips: &[LabeledClip], opts: &EvalOptions) -> Result<AblationReport, EvalError> {
    let mut results = Vec::new();
    let mut scores = Vec::new();
    for mode in PhaseMode::ALL {
        let s = score(model, clips, mode, opts)?;
        results.push((mode, compute_eer(&s)?));
        scores.push((mode, s));
    }
    Ok(AblationReport { results, scores })
}

/// CSV with header `mode,eer,threshold,n_bona_fide,n_spoof`.
pub fn write_report_csv<W: Write>(rows: &[(PhaseMode, EerResult)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "mode,eer,threshold,n_bona_fide,n_spoof")?;
    for (m, r) in rows {
        writeln!(w, "{m},{:?},{:?},{},{}", r.eer, r.threshold, r.n_bona_fide, r.n_spoof)?;
    }
    Ok(())
}

/// Plain-text table of EERs in percent, one row per phase mode.
pub fn report_text(rows: &[(PhaseMode, EerResult)]) -> String {
    let mut s = String::from("Phase mode   EER (%)   threshold   bona fide   spoof\n");
    for (m, r) in rows {
        let _ = writeln!(
            s,
            "{:<12} {:>7.2}   {:>9.4}   {:>9}   {:>5}",
            m.to_string(),
            100.0 * r.eer,
            r.threshold,
            r.n_bona_fide,
            r.n_spoof
        );
    }
    if rows.len() > 1 {
        let mut sorted = rows.to_vec();
        sorted.sort_by(|a, b| a.1.eer.total_cmp(&b.1.eer));
        let order: Vec<String> = sorted.iter().map(|r| r.0.to_string()).collect();
        let _ = writeln!(s, "ordering (best first): {}", order.join(" < "));
    }
    s
}
