//! Classification scores and class-distribution statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty confusion matrix")]
    Empty,
    #[error("label {label} outside 1..={classes}")]
    LabelOutOfRange { label: u32, classes: usize },
    #[error("{truth} true labels vs {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("class {class} has no samples")]
    ZeroCount { class: usize },
    #[error("empty histogram")]
    EmptyHistogram,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Rows are true classes, columns predicted classes; class ids `1..=c` map to index `id - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), classes * classes, "counts must be c x c");
        Self { classes, counts }
    }

    pub fn from_labels(truth: &[u32], predicted: &[u32], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch { truth: truth.len(), predicted: predicted.len() });
        }
        let mut cm = Self::zeros(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            for l in [t, p] {
                if l == 0 || l as usize > classes {
                    return Err(MetricsError::LabelOutOfRange { label: l, classes });
                }
            }
            cm.counts[(t as usize - 1) * classes + p as usize - 1] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Count for true index `t`, predicted index `p` (0-based).
    pub fn get(&self, t: usize, p: usize) -> u64 {
        self.counts[t * self.classes + p]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, k: usize) -> u64 {
        (0..self.classes).map(|p| self.get(k, p)).sum()
    }

    pub fn predicted(&self, k: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, k)).sum()
    }
}

pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let trace: u64 = (0..cm.classes()).map(|k| cm.get(k, k)).sum();
    Ok(trace as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class scores; a ratio with a zero denominator is 0.
pub fn per_class_scores(cm: &ConfusionMatrix) -> Vec<ClassScores> {
    (0..cm.classes())
        .map(|k| {
            let tp = cm.get(k, k) as f64;
            let support = cm.support(k);
            let pred = cm.predicted(k);
            let precision = if pred == 0 { 0.0 } else { tp / pred as f64 };
            let recall = if support == 0 { 0.0 } else { tp / support as f64 };
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassScores { precision, recall, f1, support }
        })
        .collect()
}

/// Unweighted mean F1 over classes with nonzero support.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let scores = per_class_scores(cm);
    let supported: Vec<f64> = scores.iter().filter(|s| s.support > 0).map(|s| s.f1).collect();
    if supported.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(supported.iter().sum::<f64>() / supported.len() as f64)
}

/// Largest class count over smallest.
pub fn imbalance_ratio(histogram: &[u64]) -> Result<f64> {
    if histogram.is_empty() {
        return Err(MetricsError::EmptyHistogram);
    }
    if let Some(k) = histogram.iter().position(|c| *c == 0) {
        return Err(MetricsError::ZeroCount { class: k + 1 });
    }
    let max = *histogram.iter().max().unwrap();
    let min = *histogram.iter().min().unwrap();
    Ok(max as f64 / min as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTailReport {
    /// `(class id, count)`, most represented first; ties by class id.
    pub sorted_counts: Vec<(u32, u64)>,
    pub cumulative_share: Vec<f64>,
    pub top1_share: f64,
}

pub fn long_tail_report(histogram: &[u64]) -> Result<LongTailReport> {
    let total: u64 = histogram.iter().sum();
    if histogram.is_empty() || total == 0 {
        return Err(MetricsError::EmptyHistogram);
    }
    let mut sorted_counts: Vec<(u32, u64)> = histogram.iter().enumerate().map(|(k, c)| (k as u32 + 1, *c)).collect();
    sorted_counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut acc = 0;
    let cumulative_share: Vec<f64> = sorted_counts
        .iter()
        .map(|(_, c)| {
            acc += c;
            acc as f64 / total as f64
        })
        .collect();
    Ok(LongTailReport { top1_share: cumulative_share[0], sorted_counts, cumulative_share })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub oa: f64,
    pub macro_f1: f64,
    /// Keyed by class id.
    pub per_class: std::collections::BTreeMap<u32, ClassScores>,
    /// Class ids left out of the macro-F1 mean because they have no test samples.
    pub excluded_from_macro_f1: Vec<u32>,
    pub imbalance_ratio: Option<f64>,
    pub sorted_counts: Vec<(u32, u64)>,
}

impl MetricsReport {
    pub fn new(cm: &ConfusionMatrix) -> Result<Self> {
        let scores = per_class_scores(cm);
        let histogram: Vec<u64> = (0..cm.classes()).map(|k| cm.support(k)).collect();
        Ok(Self {
            oa: overall_accuracy(cm)?,
            macro_f1: macro_f1(cm)?,
            excluded_from_macro_f1: scores.iter().enumerate().filter(|(_, s)| s.support == 0).map(|(k, _)| k as u32 + 1).collect(),
            per_class: scores.into_iter().enumerate().map(|(k, s)| (k as u32 + 1, s)).collect(),
            imbalance_ratio: imbalance_ratio(&histogram).ok(),
            sorted_counts: long_tail_report(&histogram)?.sorted_counts,
        })
    }
}
