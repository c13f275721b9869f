//! Landmark localisation metrics: normalised mean error, failure rate and
//! the area under the cumulative error distribution.
//!
//! Boundary convention: a sample fails when its NME is strictly greater than
//! the threshold, while the CED counts samples with NME less than or equal to
//! the threshold. Hence `failure_rate(t) == 1 - ced(t)` at every `t`.

use crate::error::{invalid, require_positive, Error, Result};
use crate::heatmap::LandmarkSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub fr_threshold: f64,
    pub auc_threshold: f64,
    pub ced_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fr_threshold: 0.10,
            auc_threshold: 0.10,
            ced_points: 1001,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_sample_nme: Vec<f64>,
    pub nme_mean: f64,
    pub fr: f64,
    pub auc: f64,
    pub ced_points: Vec<(f64, f64)>,
}

/// Mean point-to-point error divided by the normalising distance `d`.
pub fn nme(pred: &LandmarkSet, gt: &LandmarkSet, d: f64) -> Result<f64> {
    require_positive("d", d)?;
    if pred.len() != gt.len() {
        return Err(invalid(
            "landmarks",
            format!("prediction has {} points, ground truth {}", pred.len(), gt.len()),
        ));
    }
    let total: f64 = pred.points().iter().zip(gt.points()).map(|(p, g)| p.distance(*g)).sum();
    Ok(total / (pred.len() as f64 * d))
}

/// Fraction of entries strictly above `threshold`.
pub fn failure_rate(nmes: &[f64], threshold: f64) -> Result<f64> {
    if nmes.is_empty() {
        return Err(Error::Empty("NME list"));
    }
    Ok(nmes.iter().filter(|&&e| e > threshold).count() as f64 / nmes.len() as f64)
}

/// Fraction of entries at or below `t`.
pub fn ced_at(nmes: &[f64], t: f64) -> f64 {
    nmes.iter().filter(|&&e| e <= t).count() as f64 / nmes.len() as f64
}

/// CED sampled at `n_points` uniform thresholds on `[0, threshold]` and its
/// trapezoidal integral divided by `threshold`.
pub fn auc_ced(nmes: &[f64], threshold: f64, n_points: usize) -> Result<(f64, Vec<(f64, f64)>)> {
    if nmes.is_empty() {
        return Err(Error::Empty("NME list"));
    }
    require_positive("threshold", threshold)?;
    if n_points < 2 {
        return Err(invalid("n_points", "must be at least 2"));
    }
    let mut sorted = nmes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let counts: Vec<usize> = (0..n_points)
        .map(|i| sorted.partition_point(|&e| e <= threshold * i as f64 / (n_points - 1) as f64))
        .collect();
    // Trapezoid rule on integer counts so the extremes come out exact.
    let weighted = counts.iter().sum::<usize>() as f64 - 0.5 * (counts[0] + counts[n_points - 1]) as f64;
    let auc = weighted / ((n_points - 1) as f64 * n);
    let ced = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (threshold * i as f64 / (n_points - 1) as f64, c as f64 / n))
        .collect();
    Ok((auc, ced))
}

/// Scores predictions against ground truth with per-sample normalisers.
pub fn evaluate(preds: &[LandmarkSet], gts: &[LandmarkSet], norms: &[f64], cfg: &EvalConfig) -> Result<EvalReport> {
    if preds.len() != gts.len() || preds.len() != norms.len() {
        return Err(invalid(
            "samples",
            "predictions, ground truths and normalisers differ in count",
        ));
    }
    let per_sample_nme = preds
        .iter()
        .zip(gts)
        .zip(norms)
        .map(|((p, g), &d)| nme(p, g, d))
        .collect::<Result<Vec<_>>>()?;
    let fr = failure_rate(&per_sample_nme, cfg.fr_threshold)?;
    let (auc, ced_points) = auc_ced(&per_sample_nme, cfg.auc_threshold, cfg.ced_points)?;
    let nme_mean = per_sample_nme.iter().sum::<f64>() / per_sample_nme.len() as f64;
    Ok(EvalReport {
        per_sample_nme,
        nme_mean,
        fr,
        auc,
        ced_points,
    })
}
