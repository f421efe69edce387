//! Binary-classification metrics and cross-fold summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Label;

/// Raw confusion-matrix tallies. Positive means the high-quality or cell
/// class depending on which gate is being evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    #[serde(rename = "tp")]
    pub true_positives: u64,
    #[serde(rename = "fp")]
    pub false_positives: u64,
    #[serde(rename = "tn")]
    pub true_negatives: u64,
    #[serde(rename = "fn")]
    pub false_negatives: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, false_neg: u64) -> Self {
        Self {
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: false_neg,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    pub fn record(&mut self, label: Label, prediction: Label) {
        match (label, prediction) {
            (Label::Positive, Label::Positive) => self.true_positives += 1,
            (Label::Negative, Label::Positive) => self.false_positives += 1,
            (Label::Negative, Label::Negative) => self.true_negatives += 1,
            (Label::Positive, Label::Negative) => self.false_negatives += 1,
        }
    }
}

/// The four headline metrics for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricSet {
    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

/// Per-fold metrics with their mean and sample standard deviation, plus
/// wall-clock seconds per fold when the caller recorded them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub folds: Vec<MetricSet>,
    pub mean: MetricSet,
    pub std: MetricSet,
    pub fold_seconds: Vec<f64>,
}

/// Count label/prediction agreement into a confusion matrix.
pub fn accumulate(labels: &[Label], predictions: &[Label]) -> Result<ConfusionCounts> {
    if labels.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            labels: labels.len(),
            predictions: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut counts = ConfusionCounts::default();
    for (&label, &prediction) in labels.iter().zip(predictions) {
        counts.record(label, prediction);
    }
    Ok(counts)
}

/// Accuracy, precision, recall, and F1 with zero denominators mapping to 0.
pub fn compute_metrics(c: &ConfusionCounts) -> Result<MetricSet> {
    let total = c.total();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let tp = c.true_positives as f64;
    let accuracy = (c.true_positives + c.true_negatives) as f64 / total as f64;
    let predicted_positive = c.true_positives + c.false_positives;
    let precision = if predicted_positive == 0 {
        0.0
    } else {
        tp / predicted_positive as f64
    };
    let actually_positive = c.true_positives + c.false_negatives;
    let recall = if actually_positive == 0 {
        0.0
    } else {
        tp / actually_positive as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricSet {
        accuracy,
        precision,
        recall,
        f1,
    })
}

/// Mean and sample standard deviation (n-1 denominator, 0 for a single
/// fold) of every metric across folds.
pub fn fold_summary(folds: &[MetricSet]) -> Result<MetricsSummary> {
    if folds.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let stat = |pick: fn(&MetricSet) -> f64| -> (f64, f64) {
        let n = folds.len() as f64;
        let mean = folds.iter().map(pick).sum::<f64>() / n;
        let std = if folds.len() < 2 {
            0.0
        } else {
            let ss = folds
                .iter()
                .map(|f| {
                    let d = pick(f) - mean;
                    d * d
                })
                .sum::<f64>();
            (ss / (n - 1.0)).sqrt()
        };
        (mean, std)
    };
    let (acc_mean, acc_std) = stat(|f| f.accuracy);
    let (prec_mean, prec_std) = stat(|f| f.precision);
    let (rec_mean, rec_std) = stat(|f| f.recall);
    let (f1_mean, f1_std) = stat(|f| f.f1);
    Ok(MetricsSummary {
        folds: folds.to_vec(),
        mean: MetricSet {
            accuracy: acc_mean,
            precision: prec_mean,
            recall: rec_mean,
            f1: f1_mean,
        },
        std: MetricSet {
            accuracy: acc_std,
            precision: prec_std,
            recall: rec_std,
            f1: f1_std,
        },
        fold_seconds: Vec::new(),
    })
}
