//! Binary classification metrics: confusion counts, threshold scores,
//! ROC curves, and trapezoidal AUC.
//!
//! Conventions are fixed so downstream reports are reproducible:
//! a score is predicted positive iff `score >= threshold`, every 0/0
//! ratio is defined as 0, and ROC points are emitted at each distinct
//! score threshold in descending order starting from (0, 0).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {left} scores vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("labels contain a single class; ROC/AUC undefined")]
    SingleClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Threshold-based scores. Any ratio with a zero denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One ROC point; `threshold` is +inf for the leading (0, 0) anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Counts predictions at `threshold` (positive iff score >= threshold).
pub fn confusion(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<ConfusionCounts, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut c = ConfusionCounts {
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for (&s, &y) in scores.iter().zip(labels) {
        let pred_pos = s >= threshold;
        match (pred_pos, y != 0) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, false) => c.true_neg += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn classification_scores(c: &ConfusionCounts) -> Scores {
    let tp = c.true_pos as f64;
    let accuracy = ratio(tp + c.true_neg as f64, c.total() as f64);
    let precision = ratio(tp, tp + c.false_pos as f64);
    let recall = ratio(tp, tp + c.false_neg as f64);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Scores {
        accuracy,
        precision,
        recall,
        f1,
    }
}

/// Unweighted mean of per-head scores.
pub fn macro_scores(heads: &[Scores]) -> Scores {
    let n = heads.len().max(1) as f64;
    Scores {
        accuracy: heads.iter().map(|s| s.accuracy).sum::<f64>() / n,
        precision: heads.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: heads.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: heads.iter().map(|s| s.f1).sum::<f64>() / n,
    }
}

/// ROC curve with one point per distinct score, thresholds descending.
/// Starts at the (0, 0) anchor and ends at (1, 1); tied scores share one
/// point, which is what gives tied pairs half credit under the trapezoid.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let pos = labels.iter().filter(|&&y| y != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        let mut j = i;
        while j < order.len() && scores[order[j]] == t {
            if labels[order[j]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
        i = j;
    }
    Ok(points)
}

/// ROC as (fpr, tpr) pairs.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>, MetricsError> {
    Ok(roc_curve(scores, labels)?
        .iter()
        .map(|p| (p.fpr, p.tpr))
        .collect())
}

/// Trapezoidal area under the ROC curve. Equals the Mann-Whitney pairwise
/// statistic with half credit for ties.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    let pts = roc_points(scores, labels)?;
    let mut area = 0.0;
    for w in pts.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        area += (x1 - x0) * (y0 + y1) * 0.5;
    }
    Ok(area)
}

/// All five metric families for one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadReport {
    pub label: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_head: Vec<HeadReport>,
    pub macro_avg: MacroReport,
}

/// Per-head metrics at threshold 0.5 plus AUC, macro-averaged over heads.
/// `probs` is row-major N x K; `labels` matches.
pub fn evaluate_heads(
    probs: &[Vec<f64>],
    labels: &[Vec<u8>],
    label_names: &[String],
) -> Result<MetricsReport, MetricsError> {
    if probs.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = label_names.len();
    let mut per_head = Vec::with_capacity(k);
    for head in 0..k {
        let s: Vec<f64> = probs.iter().map(|r| r[head]).collect();
        let y: Vec<u8> = labels.iter().map(|r| r[head]).collect();
        let scores = classification_scores(&confusion(&s, &y, 0.5)?);
        let a = auc(&s, &y)?;
        per_head.push(HeadReport {
            label: label_names[head].clone(),
            accuracy: scores.accuracy,
            precision: scores.precision,
            recall: scores.recall,
            f1: scores.f1,
            auc: a,
        });
    }
    let n = per_head.len() as f64;
    let mean = |f: fn(&HeadReport) -> f64| per_head.iter().map(f).sum::<f64>() / n;
    let macro_avg = MacroReport {
        accuracy: mean(|h| h.accuracy),
        precision: mean(|h| h.precision),
        recall: mean(|h| h.recall),
        f1: mean(|h| h.f1),
        auc: mean(|h| h.auc),
    };
    Ok(MetricsReport {
        per_head,
        macro_avg,
    })
}

/// Aligned text table, one row per head plus the macro row.
pub fn render_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let width = report
        .per_head
        .iter()
        .map(|h| h.label.len())
        .chain(std::iter::once(5))
        .max()
        .unwrap_or(5);
    out.push_str(&format!(
        "{:<w$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}\n",
        "label",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "auc",
        w = width
    ));
    let mut row = |name: &str, a: f64, p: f64, r: f64, f: f64, u: f64| {
        out.push_str(&format!(
            "{:<w$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}\n",
            name,
            a,
            p,
            r,
            f,
            u,
            w = width
        ));
    };
    for h in &report.per_head {
        row(&h.label, h.accuracy, h.precision, h.recall, h.f1, h.auc);
    }
    let m = &report.macro_avg;
    row("macro", m.accuracy, m.precision, m.recall, m.f1, m.auc);
    out
}
