//! Classification metrics and their fold summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Category;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// `confusion[truth][predicted]`
    pub confusion: Vec<Vec<u64>>,
    pub positive_class: Category,
    /// Set when nothing was predicted positive, so precision was taken as 0.
    pub precision_undefined: bool,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricSet {
    /// Recomputes every rate from a confusion matrix; other classes count as negative.
    pub fn from_confusion(confusion: Vec<Vec<u64>>, positive_class: Category) -> Result<Self> {
        let m = confusion.len();
        if m < 2 || confusion.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("confusion matrix must be square, at least 2 x 2".into()));
        }
        let pc = positive_class as usize;
        if pc >= m {
            return Err(Error::Input(format!("positive class {} out of range", pc + 1)));
        }
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..m).map(|c| confusion[c][c]).sum();
        let tp = confusion[pc][pc];
        let fn_ = confusion[pc].iter().sum::<u64>() - tp;
        let fp = (0..m).map(|t| confusion[t][pc]).sum::<u64>() - tp;
        let tn = total - tp - fn_ - fp;
        let sensitivity = ratio(tp, tp + fn_);
        let precision = ratio(tp, tp + fp);
        let f_measure = if precision + sensitivity == 0.0 {
            0.0
        } else {
            2.0 * precision * sensitivity / (precision + sensitivity)
        };
        Ok(MetricSet {
            accuracy: ratio(correct, total),
            sensitivity,
            specificity: ratio(tn, tn + fp),
            precision,
            recall: sensitivity,
            f_measure,
            confusion,
            positive_class,
            precision_undefined: tp + fp == 0,
        })
    }

    pub fn values(&self) -> [f64; 6] {
        [
            self.accuracy,
            self.sensitivity,
            self.specificity,
            self.precision,
            self.recall,
            self.f_measure,
        ]
    }
}

pub const METRIC_NAMES: [&str; 6] = [
    "Accuracy",
    "Sensitivity",
    "Specificity",
    "Precision",
    "Recall",
    "F-measure",
];

pub fn confusion_metrics(
    predicted: &[Category],
    truth: &[Category],
    n_classes: usize,
    positive_class: Category,
) -> Result<MetricSet> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let m = n_classes.max(2);
    let mut confusion = vec![vec![0u64; m]; m];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p as usize >= m || t as usize >= m {
            return Err(Error::Input("label outside the class range".into()));
        }
        confusion[t as usize][p as usize] += 1;
    }
    MetricSet::from_confusion(confusion, positive_class)
}

/// Mean and sample standard deviation (n - 1) of each metric over folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: [f64; 6],
    pub sd: [f64; 6],
}

impl MetricSummary {
    pub fn from_folds(folds: &[MetricSet]) -> Self {
        let n = folds.len() as f64;
        let mut mean = [0.0; 6];
        let mut sd = [0.0; 6];
        if folds.is_empty() {
            return MetricSummary { mean, sd };
        }
        for f in folds {
            for (m, v) in mean.iter_mut().zip(f.values()) {
                *m += v / n;
            }
        }
        if folds.len() > 1 {
            for k in 0..6 {
                let ss: f64 = folds.iter().map(|f| (f.values()[k] - mean[k]).powi(2)).sum();
                sd[k] = (ss / (n - 1.0)).sqrt();
            }
        }
        MetricSummary { mean, sd }
    }

    pub fn accuracy(&self) -> f64 {
        self.mean[0]
    }
}
