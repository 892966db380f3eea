//! Threshold-sweep metrics for binary scores where a higher score means
//! "more likely positive" and a sample is flagged when `score >= threshold`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Cumulative `(threshold, true positives, false positives)` after admitting
/// each distinct score, highest first.
fn sweep(scores: &[f64], labels: &[u8]) -> Result<(Vec<(f64, usize, usize)>, usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut k = 0;
    while k < order.len() {
        let t = scores[order[k]];
        while k < order.len() && scores[order[k]] == t {
            if labels[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        out.push((t, tp, fp));
    }
    Ok((out, pos, neg))
}

/// ROC curve from `(0, 0)` to `(1, 1)` and its trapezoid area.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<(Vec<RocPoint>, f64)> {
    let (steps, pos, neg) = sweep(scores, labels)?;
    let mut curve = Vec::with_capacity(steps.len() + 1);
    curve.push(RocPoint { fpr: 0.0, tpr: 0.0 });
    let mut area = 0.0;
    let (mut ptp, mut pfp) = (0usize, 0usize);
    for &(_, tp, fp) in &steps {
        // Trapezoid in integer counts keeps the area exact up to the final division.
        area += (fp - pfp) as f64 * (tp + ptp) as f64;
        curve.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
        ptp = tp;
        pfp = fp;
    }
    Ok((curve, area / (2.0 * pos as f64 * neg as f64)))
}

/// Precision-recall curve and average precision
/// `Σ (R_k − R_{k−1}) · P_k`. The curve opens at recall 0 with the
/// precision of the first threshold.
pub fn pr_auc(scores: &[f64], labels: &[u8]) -> Result<(Vec<PrPoint>, f64)> {
    let (steps, pos, _) = sweep(scores, labels)?;
    let mut curve = Vec::with_capacity(steps.len() + 1);
    let first = steps[0];
    curve.push(PrPoint {
        recall: 0.0,
        precision: first.1 as f64 / (first.1 + first.2) as f64,
    });
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for &(_, tp, fp) in &steps {
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (tp - prev_tp) as f64 / pos as f64 * precision;
        curve.push(PrPoint {
            recall: tp as f64 / pos as f64,
            precision,
        });
        prev_tp = tp;
    }
    Ok((curve, ap))
}

/// Most permissive threshold whose false-positive rate stays within `cap`.
/// Candidates are the distinct scores and `+∞`.
pub fn threshold_at_fpr(scores: &[f64], labels: &[u8], cap: f64) -> Result<f64> {
    let (steps, _, neg) = sweep(scores, labels)?;
    let mut best = f64::INFINITY;
    for &(t, _, fp) in &steps {
        if fp as f64 / neg as f64 <= cap {
            best = t;
        } else {
            break;
        }
    }
    Ok(best)
}

/// True-positive rate at [`threshold_at_fpr`].
pub fn tpr_at_fpr(scores: &[f64], labels: &[u8], cap: f64) -> Result<f64> {
    let t = threshold_at_fpr(scores, labels, cap)?;
    Ok(rate_at(scores, labels, 1, t))
}

/// Fraction of samples with `label` whose score reaches `threshold`.
pub fn rate_at(scores: &[f64], labels: &[u8], label: u8, threshold: f64) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for (s, &l) in scores.iter().zip(labels) {
        if l == label {
            total += 1;
            if *s >= threshold {
                hit += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTpr {
    pub adversarial: usize,
    pub tpr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub train_normal: usize,
    pub train_adversarial: usize,
    pub test_normal: usize,
    pub test_adversarial: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub roc: Vec<RocPoint>,
    pub pr: Vec<PrPoint>,
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub fpr_cap: f64,
    /// Decision threshold meeting `fpr_cap` on the test normals.
    pub threshold: f64,
    pub tpr_at_fpr: f64,
    /// TPR at the same threshold per `method/metric` group.
    pub per_group: BTreeMap<String, GroupTpr>,
    pub counts: SampleCounts,
    pub detector_best_epoch: usize,
    pub detector_epochs: usize,
    pub seed: u64,
    pub fingerprint: String,
}
