use super::{ComplexSpectrogram, DspError};
use crate::ctensor::{ComplexTensor, Graph};

/// Magnitude compression `|z|·e^{iθ} ↦ max(ε, −ln|z| + c)·α·e^{iθ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogCompressParams {
    pub alpha: f64,
    pub c: f64,
    pub epsilon: f64,
}

impl Default for LogCompressParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            c: 0.0,
            epsilon: 1e-3,
        }
    }
}

impl LogCompressParams {
    pub fn validate(&self) -> Result<(), DspError> {
        if !(self.alpha > 0.0) {
            return Err(DspError::InvalidConfig("log-compress alpha must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(DspError::InvalidConfig("log-compress epsilon must be positive".into()));
        }
        if !self.c.is_finite() {
            return Err(DspError::InvalidConfig("log-compress c must be finite".into()));
        }
        Ok(())
    }
}

/// Applies the compression with fixed parameters; the phase mode is carried over.
pub fn log_compress(
    spec: &ComplexSpectrogram,
    params: &LogCompressParams,
) -> Result<ComplexSpectrogram, DspError> {
    params.validate()?;
    let mut g = Graph::new();
    let x = g.constant(spec.data.clone());
    let a = g.constant(ComplexTensor::scalar(params.alpha, 0.0));
    let c = g.constant(ComplexTensor::scalar(params.c, 0.0));
    let y = g.log_compress(x, a, c, params.epsilon)?;
    Ok(ComplexSpectrogram {
        data: g.value(y).clone(),
        config: spec.config,
        phase_mode: spec.phase_mode,
    })
}
