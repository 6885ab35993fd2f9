use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::{ComplexSpectrogram, DspError};

/// Phase treatment of a spectrogram: kept, stripped, or replaced by noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhaseMode {
    Full,
    Zero,
    Random,
}

impl PhaseMode {
    pub const ALL: [PhaseMode; 3] = [PhaseMode::Full, PhaseMode::Zero, PhaseMode::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseMode::Full => "full",
            PhaseMode::Zero => "zero",
            PhaseMode::Random => "random",
        }
    }
}

impl fmt::Display for PhaseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(PhaseMode::Full),
            "zero" => Ok(PhaseMode::Zero),
            "random" => Ok(PhaseMode::Random),
            other => Err(format!("unknown phase mode `{other}` (full|zero|random)")),
        }
    }
}

/// Keeps (`full`), strips (`zero`: each bin becomes `|z|`) or randomizes
/// (`random`: uniform phase in `[0, 2π)`, magnitude kept) the phase of every bin.
pub fn phase_ablate<R: Rng + ?Sized>(
    spec: &ComplexSpectrogram,
    mode: PhaseMode,
    rng: &mut R,
) -> Result<ComplexSpectrogram, DspError> {
    if spec.phase_mode != PhaseMode::Full {
        return Err(DspError::PhaseMode(spec.phase_mode));
    }
    let mut out = spec.clone();
    out.phase_mode = mode;
    match mode {
        PhaseMode::Full => {}
        PhaseMode::Zero => {
            let mags = spec.data.magnitudes();
            out.data.re_mut().copy_from_slice(&mags);
            out.data.im_mut().fill(0.0);
        }
        PhaseMode::Random => {
            let mags = spec.data.magnitudes();
            for (i, r) in mags.into_iter().enumerate() {
                let phi: f64 = rng.random_range(0.0..TAU);
                out.data.set(i, r * phi.cos(), r * phi.sin());
            }
        }
    }
    Ok(out)
}
