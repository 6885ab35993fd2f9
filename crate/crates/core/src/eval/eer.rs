use super::{EvalError, ScoreSet};

/// Equal error rate with the threshold where it is reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
    pub n_bona_fide: usize,
    pub n_spoof: usize,
}

/// Sweeps every distinct score as a threshold `t`, with
/// `FAR(t) = #{spoof: s < t}/n_spoof` and `FRR(t) = #{bona fide: s ≥ t}/n_bona`,
/// and returns the crossing of the two step curves, interpolating linearly
/// between the neighbouring thresholds when no threshold hits it exactly.
pub fn compute_eer(scores: &ScoreSet) -> Result<EerResult, EvalError> {
    let mut pts: Vec<(f64, bool)> = Vec::with_capacity(scores.entries.len());
    for e in &scores.entries {
        if !e.score.is_finite() {
            return Err(EvalError::NonFiniteScore(e.id.clone()));
        }
        pts.push((e.score, e.label == 1));
    }
    let n_spoof = pts.iter().filter(|p| p.1).count();
    let n_bona = pts.len() - n_spoof;
    if n_spoof == 0 || n_bona == 0 {
        return Err(EvalError::SingleClass);
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // curve points (threshold, FAR, FRR); the first threshold is the lowest score
    let mut curve = Vec::with_capacity(pts.len() + 1);
    let (mut spoof_below, mut bona_below) = (0usize, 0usize);
    let mut i = 0;
    while i < pts.len() {
        let t = pts[i].0;
        curve.push((t, spoof_below as f64 / n_spoof as f64, 1.0 - bona_below as f64 / n_bona as f64));
        while i < pts.len() && pts[i].0 == t {
            if pts[i].1 {
                spoof_below += 1;
            } else {
                bona_below += 1;
            }
            i += 1;
        }
    }
    curve.push((f64::INFINITY, 1.0, 0.0));
    let k = curve
        .iter()
        .position(|&(_, far, frr)| far >= frr)
        .expect("the final point has FAR 1 and FRR 0");
    let (t1, far1, frr1) = curve[k];
    if far1 == frr1 || k == 0 {
        return Ok(EerResult {
            eer: far1,
            threshold: t1,
            n_bona_fide: n_bona,
            n_spoof,
        });
    }
    let (t0, far0, frr0) = curve[k - 1];
    // FAR − FRR goes from negative at k−1 to positive at k
    let d0 = far0 - frr0;
    let d1 = far1 - frr1;
    let lam = d0 / (d0 - d1);
    let eer = far0 + lam * (far1 - far0);
    let threshold = if t1.is_finite() { t0 + lam * (t1 - t0) } else { t0 };
    Ok(EerResult {
        eer,
        threshold,
        n_bona_fide: n_bona,
        n_spoof,
    })
}
