use std::collections::HashSet;
use std::io::Write;

use rand::seq::SliceRandom;

use super::augment::{augment, fgsm_example, freq_mask, AugmentationConfig};
use super::{LabeledClip, TrainConfig, TrainError};
use crate::ctensor::{AdamState, ComplexTensor};
use crate::dsp::{
    center_crop_or_pad, cqt, crop_or_pad, phase_ablate, stack_batch, trim_silence, AudioClip, ComplexSpectrogram,
    DspError, TrimConfig,
};
use crate::eval::{compute_eer, ScoreEntry, ScoreSet};
use crate::nn::{magnitude_softmax, Model, Objective, PassOptions};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// mean cross-entropy over the clean training batches
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_eer: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// epoch (1-based) whose model was returned
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    /// CSV with header `epoch,train_loss,val_loss,val_eer`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss,val_eer")?;
        for r in &self.records {
            writeln!(w, "{},{:?},{:?},{:?}", r.epoch, r.train_loss, r.val_loss, r.val_eer)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Wait,
    Stop,
}

/// Patience counter over a monitored quantity where lower is better.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            waited: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, value: f64) -> StopDecision {
        if value < self.best - self.min_delta {
            self.best = value;
            self.waited = 0;
            StopDecision::Improved
        } else {
            self.waited += 1;
            if self.waited >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Wait
            }
        }
    }
}

pub struct TrainOutcome {
    /// parameters and statistics from the best validation epoch
    pub model: Model,
    pub history: History,
}

struct Item<'a> {
    clip: &'a LabeledClip,
    trimmed: AudioClip,
    /// clean full-phase features, valid when cropping draws nothing
    cached: Option<ComplexSpectrogram>,
}

fn trimmed_items<'a>(clips: &'a [LabeledClip], trim: &TrimConfig) -> Result<Vec<Item<'a>>, TrainError> {
    clips
        .iter()
        .map(|c| {
            let trimmed = trim_silence(&c.clip, trim).map_err(|source| TrainError::Clip {
                id: c.id.clone(),
                source,
            })?;
            Ok(Item {
                clip: c,
                trimmed,
                cached: None,
            })
        })
        .collect()
}

fn target_len(clip: &AudioClip, duration_s: f64) -> usize {
    (duration_s * clip.sample_rate() as f64).round() as usize
}

/// Training features for one item: random crop, waveform augmentation, CQT,
/// phase treatment, then frequency masking. Everything random is drawn from
/// a generator keyed by `(seed, epoch, item)`.
fn training_features(
    item: &mut Item<'_>,
    key: &[u64],
    model: &Model,
    cfg: &TrainConfig,
    aug: &AugmentationConfig,
) -> Result<ComplexSpectrogram, DspError> {
    let mut rng = seeds::rng(cfg.seed, key);
    let deterministic_crop = item.trimmed.len() <= target_len(&item.trimmed, cfg.duration_s);
    let cropped = crop_or_pad(&item.trimmed, cfg.duration_s, &mut rng)?;
    let spec = match augment(&cropped, aug, &mut rng) {
        Some(a) => cqt(&a, model.cqt())?,
        None if deterministic_crop => match &item.cached {
            Some(s) => s.clone(),
            None => {
                let s = cqt(&cropped, model.cqt())?;
                item.cached = Some(s.clone());
                s
            }
        },
        None => cqt(&cropped, model.cqt())?,
    };
    let mut spec = phase_ablate(&spec, cfg.phase_mode, &mut rng)?;
    freq_mask(&mut spec, aug, &mut rng);
    Ok(spec)
}

/// Validation batches: central crop, configured phase mode, no augmentation.
fn validation_batches(
    clips: &[LabeledClip],
    model: &Model,
    cfg: &TrainConfig,
    trim: &TrimConfig,
) -> Result<Vec<(ComplexTensor, Vec<usize>)>, TrainError> {
    let mut out = Vec::new();
    for (ci, chunk) in clips.chunks(cfg.batch_size).enumerate() {
        let mut specs = Vec::with_capacity(chunk.len());
        for (j, c) in chunk.iter().enumerate() {
            let clip_err = |source| TrainError::Clip {
                id: c.id.clone(),
                source,
            };
            let t = trim_silence(&c.clip, trim).map_err(clip_err)?;
            let cropped = center_crop_or_pad(&t, cfg.duration_s).map_err(clip_err)?;
            let spec = cqt(&cropped, model.cqt()).map_err(clip_err)?;
            let index = (ci * cfg.batch_size + j) as u64;
            specs.push(phase_ablate(&spec, cfg.phase_mode, &mut seeds::rng(cfg.seed, &[2, index]))?);
        }
        let refs: Vec<_> = specs.iter().collect();
        out.push((stack_batch(&refs)?, chunk.iter().map(|c| c.label).collect()));
    }
    Ok(out)
}

fn validate(
    model: &Model,
    batches: &[(ComplexTensor, Vec<usize>)],
    clips: &[LabeledClip],
) -> Result<(f64, f64), TrainError> {
    let mut total = 0.0;
    let mut n = 0;
    let mut scores = ScoreSet::default();
    for (x, y) in batches {
        let r = model.run(x, Objective::CrossEntropy(y), PassOptions::eval())?;
        let loss = r.objective.unwrap_or(f64::NAN);
        total += loss * y.len() as f64;
        for (row, _) in magnitude_softmax(&r.logits).chunks(2).zip(y) {
            let c = &clips[n];
            scores.entries.push(ScoreEntry::new(c.id.clone(), c.label, row[1]));
            n += 1;
        }
    }
    let eer = match compute_eer(&scores) {
        Ok(r) => r.eer,
        Err(crate::eval::EvalError::SingleClass) => f64::NAN,
        Err(e) => return Err(e.into()),
    };
    Ok((total / n as f64, eer))
}

fn adam_step(model: &mut Model, adam: &mut AdamState, grads: Vec<(Vec<f64>, Vec<f64>)>) -> Result<(), TrainError> {
    model.set_grads(grads);
    adam.step(&mut model.params_mut())?;
    model.enforce_constraints();
    Ok(())
}

/// Trains `model` with Adam on cross-entropy and returns the parameters from
/// the epoch with the lowest validation loss.
///
/// Each epoch shuffles the training set with a generator derived from the
/// seed and epoch. A batch is followed, with probability `aug.p_fgsm`, by an
/// FGSM copy of itself under the updated model. Training stops after
/// `patience` epochs without an improvement larger than `min_delta`, or at
/// `max_epochs`.
pub fn train_loop(
    mut model: Model,
    train: &[LabeledClip],
    val: &[LabeledClip],
    cfg: &TrainConfig,
    aug: &AugmentationConfig,
    trim: &TrimConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    aug.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let train_ids: HashSet<&str> = train.iter().map(|c| c.id.as_str()).collect();
    if let Some(c) = val.iter().find(|c| train_ids.contains(c.id.as_str())) {
        return Err(TrainError::Overlap(c.id.clone()));
    }

    let mut items = trimmed_items(train, trim)?;
    let val_batches = validation_batches(val, &model, cfg, trim)?;
    let mut adam = AdamState::new(cfg.adam());
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut history = History::default();
    let mut best: Option<Model> = None;
    let mut order: Vec<usize> = (0..items.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let e = epoch as u64;
        order.sort_unstable();
        order.shuffle(&mut seeds::rng(cfg.seed, &[0, e]));
        let mut loss_sum = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut specs = Vec::with_capacity(idx.len());
            let mut labels = Vec::with_capacity(idx.len());
            for &i in idx {
                let item = &mut items[i];
                let id = item.clip.id.clone();
                let s = training_features(item, &[1, e, i as u64], &model, cfg, aug)
                    .map_err(|source| TrainError::Clip { id, source })?;
                specs.push(s);
                labels.push(item.clip.label);
            }
            let refs: Vec<_> = specs.iter().collect();
            let x = stack_batch(&refs)?;

            let mut batch_rng = seeds::rng(cfg.seed, &[3, e, bi as u64]);
            let diverged = |loss: f64| TrainError::Diverged {
                epoch,
                batch: bi + 1,
                loss,
            };
            let mut drop_rng = seeds::rng(cfg.seed, &[4, e, bi as u64]);
            let r = model.run(
                &x,
                Objective::CrossEntropy(&labels),
                PassOptions {
                    batch_stats: true,
                    dropout: Some(&mut drop_rng),
                    param_grads: true,
                    input_grad: false,
                },
            )?;
            let loss = r.objective.unwrap_or(f64::NAN);
            if !loss.is_finite() {
                return Err(diverged(loss));
            }
            loss_sum += loss * idx.len() as f64;
            model.update_running(&r.batch_stats);
            adam_step(&mut model, &mut adam, r.param_grads)?;

            if rand::Rng::random::<f64>(&mut batch_rng) < aug.p_fgsm {
                let adv = fgsm_example(&model, &x, &labels, aug.fgsm_fraction)?;
                let mut drop_rng = seeds::rng(cfg.seed, &[5, e, bi as u64]);
                let r = model.run(
                    &adv,
                    Objective::CrossEntropy(&labels),
                    PassOptions {
                        batch_stats: true,
                        dropout: Some(&mut drop_rng),
                        param_grads: true,
                        input_grad: false,
                    },
                )?;
                let loss = r.objective.unwrap_or(f64::NAN);
                if !loss.is_finite() {
                    return Err(diverged(loss));
                }
                model.update_running(&r.batch_stats);
                adam_step(&mut model, &mut adam, r.param_grads)?;
            }
        }

        let (val_loss, val_eer) = validate(&model, &val_batches, val)?;
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                batch: 0,
                loss: val_loss,
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_eer,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, val loss {:.4}, val EER {:.4}",
            record.train_loss,
            val_loss,
            val_eer
        );
        history.records.push(record);
        match stopper.observe(val_loss) {
            StopDecision::Improved => {
                best = Some(model.clone());
                history.best_epoch = epoch;
            }
            StopDecision::Wait => {}
            StopDecision::Stop => {
                history.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.unwrap_or(model),
        history,
    })
}
