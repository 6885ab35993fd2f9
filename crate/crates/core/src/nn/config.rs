use std::fmt;
use std::str::FromStr;

use super::NnError;
use crate::dsp::LogCompressParams;
use crate::kv::{self, Section};

/// Reduction of the time axis after the linear stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Mean,
    /// per channel, the time step with the largest magnitude
    MagnitudeMax,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Mean => "mean",
            Pooling::MagnitudeMax => "magmax",
        })
    }
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "magmax" => Ok(Pooling::MagnitudeMax),
            _ => Err(format!("unknown pooling `{s}` (mean|magmax)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub conv_channels: Vec<usize>,
    pub linear_widths: Vec<usize>,
    pub dropout_p: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub pooling: Pooling,
    /// initial α and c, and the fixed floor ε
    pub log_compress: LogCompressParams,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conv_channels: vec![4, 4, 8, 8],
            linear_widths: vec![16, 16, 2],
            dropout_p: 0.4,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            pooling: Pooling::Mean,
            log_compress: LogCompressParams::default(),
        }
    }
}

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const PADDING: usize = 1;

/// Output length of one stride-2 block.
pub fn halve(n: usize) -> usize {
    (n + 2 * PADDING - KERNEL) / STRIDE + 1
}

impl ModelConfig {
    /// A small configuration used by gradient checks.
    pub fn tiny() -> Self {
        Self {
            conv_channels: vec![2, 2, 2, 2],
            linear_widths: vec![4, 4, 2],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.to_string()));
        if self.conv_channels.len() != 4 || self.conv_channels.contains(&0) {
            return bad("model.conv_channels must list exactly 4 positive counts");
        }
        if self.linear_widths.len() != 3 || self.linear_widths.contains(&0) {
            return bad("model.linear_widths must list exactly 3 positive counts");
        }
        if self.linear_widths[2] != 2 {
            return bad("model.linear_widths must end in 2 (two classes)");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("model.dropout_p must lie in [0, 1)");
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return bad("model.bn_momentum must lie in (0, 1]");
        }
        if !(self.bn_eps > 0.0) {
            return bad("model.bn_eps must be positive");
        }
        self.log_compress
            .validate()
            .map_err(|e| NnError::InvalidConfig(format!("model log-compress: {e}")))
    }

    /// Frequency and time extent after the four conv blocks.
    pub fn conv_output(&self, f: usize, t: usize) -> (usize, usize) {
        (0..4).fold((f, t), |(a, b), _| (halve(a), halve(b)))
    }
}

impl Section for ModelConfig {
    const NAME: &'static str = "model";

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "conv_channels" => self.conv_channels = kv::list(key, v)?,
            "linear_widths" => self.linear_widths = kv::list(key, v)?,
            "dropout_p" => self.dropout_p = kv::value(key, v)?,
            "bn_momentum" => self.bn_momentum = kv::value(key, v)?,
            "bn_eps" => self.bn_eps = kv::value(key, v)?,
            "pooling" => self.pooling = kv::value(key, v)?,
            "alpha_init" => self.log_compress.alpha = kv::value(key, v)?,
            "c_init" => self.log_compress.c = kv::value(key, v)?,
            "epsilon" => self.log_compress.epsilon = kv::value(key, v)?,
            _ => return Err(format!("unknown key model.{key}")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("conv_channels", kv::join(&self.conv_channels)),
            ("linear_widths", kv::join(&self.linear_widths)),
            ("dropout_p", kv::float(self.dropout_p)),
            ("bn_momentum", kv::float(self.bn_momentum)),
            ("bn_eps", kv::float(self.bn_eps)),
            ("pooling", self.pooling.to_string()),
            ("alpha_init", kv::float(self.log_compress.alpha)),
            ("c_init", kv::float(self.log_compress.c)),
            ("epsilon", kv::float(self.log_compress.epsilon)),
        ]
    }
}
