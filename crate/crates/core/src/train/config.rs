use super::TrainError;
use crate::ctensor::AdamConfig;
use crate::dsp::PhaseMode;
use crate::kv::{self, Section};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// validation loss must drop by more than this to count as improvement
    pub min_delta: f64,
    pub seed: u64,
    pub duration_s: f64,
    /// phase treatment applied to training and validation features
    pub phase_mode: PhaseMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-3,
            weight_decay: 1e-6,
            batch_size: 32,
            max_epochs: 25,
            patience: 3,
            min_delta: 5e-4,
            seed: 1,
            duration_s: 2.0,
            phase_mode: PhaseMode::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("train.batch_size must be at least 1");
        }
        if self.patience == 0 {
            return bad("train.patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("train.max_epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("train.learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.min_delta >= 0.0) {
            return bad("train.weight_decay and train.min_delta must be non-negative");
        }
        if !(self.duration_s > 0.0) {
            return bad("train.duration_s must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

impl Section for TrainConfig {
    const NAME: &'static str = "train";

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "learning_rate" => self.learning_rate = kv::value(key, v)?,
            "weight_decay" => self.weight_decay = kv::value(key, v)?,
            "batch_size" => self.batch_size = kv::value(key, v)?,
            "max_epochs" => self.max_epochs = kv::value(key, v)?,
            "patience" => self.patience = kv::value(key, v)?,
            "min_delta" => self.min_delta = kv::value(key, v)?,
            "seed" => self.seed = kv::value(key, v)?,
            "duration_s" => self.duration_s = kv::value(key, v)?,
            "phase_mode" => self.phase_mode = v.parse()?,
            _ => return Err(format!("unknown key train.{key}")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("learning_rate", kv::float(self.learning_rate)),
            ("weight_decay", kv::float(self.weight_decay)),
            ("batch_size", self.batch_size.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("min_delta", kv::float(self.min_delta)),
            ("seed", self.seed.to_string()),
            ("duration_s", kv::float(self.duration_s)),
            ("phase_mode", self.phase_mode.to_string()),
        ]
    }
}
