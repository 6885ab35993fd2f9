use rand::{Rng, RngCore};

use crate::ctensor::{ComplexTensor, Graph, TensorError, Var};

/// Keep-mask for whole complex units: `1/(1−p)` with probability `1−p`, else 0.
pub fn dropout_mask<R: Rng + ?Sized>(shape: &[usize], p: f64, rng: &mut R) -> ComplexTensor {
    let mut m = ComplexTensor::zeros(shape);
    let keep = 1.0 / (1.0 - p);
    for v in m.re_mut() {
        if rng.random::<f64>() >= p {
            *v = keep;
        }
    }
    m
}

/// Training-mode dropout when `rng` is given, identity otherwise.
pub fn dropout(g: &mut Graph, x: Var, p: f64, rng: Option<&mut (dyn RngCore + '_)>) -> Result<Var, TensorError> {
    match rng {
        Some(rng) if p > 0.0 => {
            let mask = dropout_mask(g.shape(x), p, rng);
            let m = g.constant(mask);
            g.mul(x, m)
        }
        _ => Ok(x),
    }
}

/// Picks, per leading index, the element of the last axis with the largest magnitude.
pub fn magnitude_max_pool(g: &mut Graph, x: Var) -> Result<Var, TensorError> {
    let shape = g.shape(x).to_vec();
    let t_len = *shape.last().ok_or(TensorError::DegenerateBatch)?;
    let mags = g.value(x).magnitudes();
    let mut mask = ComplexTensor::zeros(&shape);
    for (r, row) in mags.chunks(t_len.max(1)).enumerate() {
        let best = row
            .iter()
            .enumerate()
            .fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
        mask.re_mut()[r * t_len + best] = 1.0;
    }
    let m = g.constant(mask);
    let picked = g.mul(x, m)?;
    let mean = g.mean_last_axis(picked)?;
    let scale = g.constant(ComplexTensor::scalar(t_len as f64, 0.0));
    g.scale_by_real(mean, scale)
}

/// Row-wise softmax of logit magnitudes for logits `[B, K]`, row-major.
pub fn magnitude_softmax(logits: &ComplexTensor) -> Vec<f64> {
    let k = *logits.shape().last().unwrap_or(&1);
    let mags = logits.magnitudes();
    let mut out = Vec::with_capacity(mags.len());
    for row in mags.chunks(k.max(1)) {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        out.extend(row.iter().map(|v| (v - mx).exp() / z));
    }
    out
}
