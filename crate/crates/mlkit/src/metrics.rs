//! Threshold selection, confusion-matrix metrics, ROC/PR curves and the
//! SOFA baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no positive labels, the f-score is undefined")]
    NoPositives,
    #[error("scores and labels differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
}

/// `2PR / (P + R)`, 0 when both are 0.
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(pred: &[u8], labels: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&p, &l) in pred.iter().zip(labels) {
            match (p == 1, l == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn f_score(&self) -> f64 {
        f_score(self.precision(), self.sensitivity())
    }
}

/// Threshold grid `k / 100` for `k = 1..=99`.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (1..100).map(|k| k as f64 / 100.0)
}

pub fn predict_at(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= threshold)).collect()
}

/// Grid threshold with the largest f-score; ties go to the lowest.
pub fn select_threshold(probs: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    if probs.len() != labels.len() {
        return Err(MetricsError::Length(probs.len(), labels.len()));
    }
    if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(MetricsError::Probability(p));
    }
    if !labels.contains(&1) {
        return Err(MetricsError::NoPositives);
    }
    let mut best = (f64::NEG_INFINITY, 0.5);
    for th in threshold_grid() {
        let f = Confusion::from_predictions(&predict_at(probs, th), labels).f_score();
        if f > best.0 {
            best = (f, th);
        }
    }
    Ok(best.1)
}

/// Area under the ROC curve as the Mann-Whitney statistic with midranks.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Curve points at every distinct score, from the highest threshold down.
/// Returns `(roc, pr)` with ROC as `(fpr, tpr)` and PR as `(recall, precision)`.
pub fn curves(scores: &[f64], labels: &[u8]) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut roc = vec![(0.0, 0.0)];
    let mut pr = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        roc.push((if n_neg > 0.0 { fp / n_neg } else { 0.0 }, if n_pos > 0.0 { tp / n_pos } else { 0.0 }));
        pr.push((if n_pos > 0.0 { tp / n_pos } else { 0.0 }, tp / (tp + fp)));
    }
    (roc, pr)
}

/// Step-wise area under the precision-recall curve (average precision).
pub fn auprc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return None;
    }
    let (_, pr) = curves(scores, labels);
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in pr {
        area += (r - prev_recall) * p;
        prev_recall = r;
    }
    Some(area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(flatten)]
    pub confusion: Confusion,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f_score: f64,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub roc_curve: Vec<(f64, f64)>,
    pub pr_curve: Vec<(f64, f64)>,
}

/// `scores` rank the windows, `predictions` are the thresholded labels.
pub fn evaluate(scores: &[f64], predictions: &[u8], labels: &[u8]) -> Result<Metrics, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::Length(scores.len(), labels.len()));
    }
    if predictions.len() != labels.len() {
        return Err(MetricsError::Length(predictions.len(), labels.len()));
    }
    let confusion = Confusion::from_predictions(predictions, labels);
    let (roc_curve, pr_curve) = curves(scores, labels);
    Ok(Metrics {
        confusion,
        sensitivity: confusion.sensitivity(),
        specificity: confusion.specificity(),
        precision: confusion.precision(),
        f_score: confusion.f_score(),
        auroc: auroc(scores, labels),
        auprc: auprc(scores, labels),
        roc_curve,
        pr_curve,
    })
}

/// Positive iff the window SOFA score is at least 2; the score itself ranks.
pub fn sofa_baseline(sofa: &[u32], labels: &[u8]) -> Result<Metrics, MetricsError> {
    let scores: Vec<f64> = sofa.iter().map(|&s| f64::from(s)).collect();
    let pred: Vec<u8> = sofa.iter().map(|&s| u8::from(s >= 2)).collect();
    evaluate(&scores, &pred, labels)
}
