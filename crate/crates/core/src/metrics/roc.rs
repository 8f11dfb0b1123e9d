use serde::{Deserialize, Serialize};

use crate::cohort::stats::midranks;
use crate::error::{Error, Result};

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "need both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

/// Probability that a random positive outscores a random negative, ties ½.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Empirical ROC curve. Point `i` predicts positive when
/// `score > thresholds[i]`; thresholds run from the maximum score down to
/// negative infinity, so the curve starts at (0,0) and ends at (1,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl RocCurve {
    pub fn trapezoid_area(&self) -> f64 {
        self.fpr
            .windows(2)
            .zip(self.tpr.windows(2))
            .map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) / 2.0)
            .sum()
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut thresholds = Vec::new();
    let mut fpr = Vec::new();
    let mut tpr = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let t = scores[idx[i]];
        // Everything strictly above t has been counted.
        thresholds.push(t);
        fpr.push(fp as f64 / n_neg as f64);
        tpr.push(tp as f64 / n_pos as f64);
        while i < idx.len() && scores[idx[i]] == t {
            if labels[idx[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
    }
    thresholds.push(f64::NEG_INFINITY);
    fpr.push(1.0);
    tpr.push(1.0);
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        n_pos,
        n_neg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub target_specificity: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub threshold: f64,
}

/// Among thresholds whose specificity is at least `target_spec`, the one
/// with maximal sensitivity (and, within that, the smallest threshold).
pub fn sensitivity_at_specificity(scores: &[f64], labels: &[u8], target_spec: f64) -> Result<OperatingPoint> {
    if !(target_spec > 0.0 && target_spec <= 1.0) {
        return Err(Error::invalid(format!("target specificity {target_spec} outside (0, 1]")));
    }
    let roc = roc_curve(scores, labels)?;
    operating_point(&roc, target_spec)
}

/// Same rule evaluated on a precomputed curve.
pub fn operating_point(roc: &RocCurve, target_spec: f64) -> Result<OperatingPoint> {
    // Specificity falls and sensitivity rises along the curve, so the last
    // feasible point is the answer. Counts avoid rounding at the boundary.
    let mut best = None;
    for i in 0..roc.len() {
        let fp = (roc.fpr[i] * roc.n_neg as f64).round();
        let tn = roc.n_neg as f64 - fp;
        if tn >= target_spec * roc.n_neg as f64 - 1e-9 {
            best = Some(i);
        }
    }
    let i = best.ok_or_else(|| Error::UndefinedMetric("no threshold reaches the target specificity".into()))?;
    Ok(OperatingPoint {
        target_specificity: target_spec,
        sensitivity: roc.tpr[i],
        specificity: 1.0 - roc.fpr[i],
        threshold: roc.thresholds[i],
    })
}
