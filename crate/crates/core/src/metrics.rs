//! Confusion matrices and the derived accuracy, precision, recall and F1.
//!
//! Per-class scores are one-vs-rest. Multi-class summaries are given both
//! as macro (unweighted) and weighted (by support) means. Any 0/0 ratio is
//! defined as 0 and counted in [`MetricsReport::zero_division`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{truth} true labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("class id {id} out of range for {classes} classes")]
    IdOutOfRange { id: usize, classes: usize },
    #[error("no (true, predicted) pairs to evaluate")]
    EmptyInput,
    #[error("confusion matrix has no counts")]
    EmptyMatrix,
    #[error("confusion matrix must be square with one name per class")]
    BadShape,
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Header of [`MetricsReport::csv_row`].
pub const CSV_HEADER: &str = "model,accuracy,precision,recall,f1";

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            pred: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if let Some(&id) = [t, p].iter().find(|&&id| id >= classes) {
            return Err(MetricsError::IdOutOfRange { id, classes });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: (0..classes).map(|i| i.to_string()).collect(),
    })
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        let c = counts.len();
        if class_names.len() != c || counts.iter().any(|r| r.len() != c) {
            return Err(MetricsError::BadShape);
        }
        Ok(ConfusionMatrix { counts, class_names })
    }

    pub fn with_names<S: ToString>(mut self, names: &[S]) -> Result<Self> {
        if names.len() != self.counts.len() {
            return Err(MetricsError::BadShape);
        }
        self.class_names = names.iter().map(ToString::to_string).collect();
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    /// Predicted as `class` but belonging elsewhere.
    pub fn false_positives(&self, class: usize) -> u64 {
        self.predicted(class) - self.true_positives(class)
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        self.support(class) - self.true_positives(class)
    }

    pub fn true_negatives(&self, class: usize) -> u64 {
        self.total() - self.support(class) - self.false_positives(class)
    }

    /// Row sum.
    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Column sum.
    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
    /// Number of 0/0 ratios that were set to 0.
    pub zero_division: usize,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: f64, den: f64, zero_division: &mut usize) -> f64 {
    if den == 0.0 {
        *zero_division += 1;
        0.0
    } else {
        num / den
    }
}

pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let mut zero_division = 0;
    let per_class: Vec<ClassScores> = (0..cm.num_classes())
        .map(|c| {
            let tp = cm.true_positives(c) as f64;
            let precision = ratio(tp, cm.predicted(c) as f64, &mut zero_division);
            let recall = ratio(tp, cm.support(c) as f64, &mut zero_division);
            let f1 = ratio(2.0 * precision * recall, precision + recall, &mut zero_division);
            ClassScores {
                class: cm.class_names()[c].clone(),
                precision,
                recall,
                f1,
                support: cm.support(c),
            }
        })
        .collect();

    let k = per_class.len() as f64;
    let n = total as f64;
    let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    let weighted = |f: fn(&ClassScores) -> f64| per_class.iter().map(|s| s.support as f64 * f(s)).sum::<f64>() / n;
    Ok(MetricsReport {
        accuracy: cm.trace() as f64 / n,
        macro_avg: Averages {
            precision: mean(|s| s.precision),
            recall: mean(|s| s.recall),
            f1: mean(|s| s.f1),
        },
        weighted_avg: Averages {
            precision: weighted(|s| s.precision),
            recall: weighted(|s| s.recall),
            f1: weighted(|s| s.f1),
        },
        per_class,
        total,
        zero_division,
        confusion: cm.clone(),
    })
}

/// Confusion matrix and report in one step.
pub fn evaluate(y_true: &[usize], y_pred: &[usize], class_names: &[&str]) -> Result<MetricsReport> {
    report(&confusion(y_true, y_pred, class_names.len())?.with_names(class_names)?)
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// `model,accuracy,precision,recall,f1` with weighted averages.
    pub fn csv_row(&self, model: &str) -> String {
        let mut out = String::new();
        write!(
            out,
            "{model},{},{},{},{}",
            self.accuracy, self.weighted_avg.precision, self.weighted_avg.recall, self.weighted_avg.f1
        )
        .unwrap();
        out
    }
}
