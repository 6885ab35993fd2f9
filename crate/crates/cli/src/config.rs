//! Run configuration: defaults, then a `section.key = value` file, then
//! `--set` overrides.

use std::collections::HashMap;
use std::path::Path;

use ccqt::dsp::{CqtConfig, PhaseMode, TrimConfig};
use ccqt::explain::SmoothGradParams;
use ccqt::kv::{self, KvError, Section};
use ccqt::nn::ModelConfig;
use ccqt::train::{AugmentationConfig, SyntheticDatasetSpec, TrainConfig};

/// Held-out fractions for splitting a corpus by group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub test_fraction: f64,
    /// taken from what remains after the test split
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            val_fraction: 0.2,
            seed: 1,
        }
    }
}

impl Section for SplitConfig {
    const NAME: &'static str = "split";

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "test_fraction" => self.test_fraction = kv::value(key, v)?,
            "val_fraction" => self.val_fraction = kv::value(key, v)?,
            "seed" => self.seed = kv::value(key, v)?,
            _ => return Err(format!("unknown key split.{key}")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("test_fraction", kv::float(self.test_fraction)),
            ("val_fraction", kv::float(self.val_fraction)),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Scoring options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub phase_mode: PhaseMode,
    /// seeds the phase draws of `random` mode
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            phase_mode: PhaseMode::Full,
            seed: 1,
            batch_size: 16,
        }
    }
}

impl Section for EvalConfig {
    const NAME: &'static str = "eval";

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "phase_mode" => self.phase_mode = v.parse()?,
            "seed" => self.seed = kv::value(key, v)?,
            "batch_size" => self.batch_size = kv::value(key, v)?,
            _ => return Err(format!("unknown key eval.{key}")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("phase_mode", self.phase_mode.to_string()),
            ("seed", self.seed.to_string()),
            ("batch_size", self.batch_size.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub cqt: CqtConfig,
    pub trim: TrimConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentationConfig,
    pub synth: SyntheticDatasetSpec,
    pub explain: SmoothGradParams,
    pub eval: EvalConfig,
    pub split: SplitConfig,
}

fn apply<S: Section>(s: &mut S, key: &str, value: &str) -> Result<(), String> {
    s.set(key, value)
}

impl RunConfig {
    fn set(&mut self, full_key: &str, value: &str) -> Result<(), String> {
        let (section, key) = full_key
            .split_once('.')
            .ok_or_else(|| format!("key `{full_key}` must have the form section.key"))?;
        match section {
            "cqt" => apply(&mut self.cqt, key, value),
            "trim" => apply(&mut self.trim, key, value),
            "model" => apply(&mut self.model, key, value),
            "train" => apply(&mut self.train, key, value),
            "augment" => apply(&mut self.augment, key, value),
            "synth" => apply(&mut self.synth, key, value),
            "explain" => apply(&mut self.explain, key, value),
            "eval" => apply(&mut self.eval, key, value),
            "split" => apply(&mut self.split, key, value),
            _ => Err(format!("unknown section `{section}`")),
        }
    }

    /// Checks every section; messages name the offending key.
    fn check(&self) -> Result<(), String> {
        let s = |e: &dyn std::fmt::Display| e.to_string();
        self.cqt.validate().map_err(|e| s(&e))?;
        self.trim.validate().map_err(|e| s(&e))?;
        self.model.validate().map_err(|e| s(&e))?;
        self.train.validate().map_err(|e| s(&e))?;
        self.augment.validate().map_err(|e| s(&e))?;
        self.synth.validate().map_err(|e| s(&e))?;
        self.explain.validate().map_err(|e| s(&e))?;
        if self.eval.batch_size == 0 {
            return Err("eval.batch_size must be at least 1".into());
        }
        for (k, v) in [("split.test_fraction", self.split.test_fraction), ("split.val_fraction", self.split.val_fraction)] {
            if !(0.0..1.0).contains(&v) {
                return Err(format!("{k} must lie in [0, 1)"));
            }
        }
        if self.synth.sample_rate != self.cqt.sample_rate {
            return Err(format!(
                "synth.sample_rate {} differs from cqt.sample_rate {}",
                self.synth.sample_rate, self.cqt.sample_rate
            ));
        }
        Ok(())
    }

    /// Defaults, then `text`, then `overrides` (`section.key=value`), validated.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, KvError> {
        let mut cfg = RunConfig::default();
        let mut origin: HashMap<String, usize> = HashMap::new();
        for e in kv::parse(text)? {
            cfg.set(&e.key, &e.value).map_err(|m| KvError::new(e.line, m))?;
            origin.insert(e.key, e.line);
        }
        for o in overrides {
            let e = kv::parse_override(o)?;
            cfg.set(&e.key, &e.value)
                .map_err(|m| KvError::new(0, format!("--set {o}: {m}")))?;
            origin.insert(e.key, 0);
        }
        cfg.check().map_err(|m| {
            // point at the line that set the key the message names, if any
            let line = origin
                .iter()
                .filter(|(k, _)| m.contains(k.as_str()))
                .map(|(_, l)| *l)
                .max()
                .unwrap_or(0);
            KvError::new(line, m)
        })?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?,
            None => String::new(),
        };
        RunConfig::parse(&text, overrides).map_err(|e| match path {
            Some(p) if e.line > 0 => anyhow::anyhow!("{}:{}: {}", p.display(), e.line, e.message),
            _ => anyhow::anyhow!("{}", e.message),
        })
    }

    /// Every key with its effective value, one per line.
    pub fn render(&self) -> String {
        [
            self.cqt.render(),
            self.trim.render(),
            self.model.render(),
            self.train.render(),
            self.augment.render(),
            self.synth.render(),
            self.explain.render(),
            self.eval.render(),
            self.split.render(),
        ]
        .concat()
    }
}
