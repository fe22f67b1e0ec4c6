//! Classical classifiers over TF-IDF rows: multinomial naive Bayes, a
//! one-vs-rest linear SVM, a random forest of CART trees and multinomial
//! logistic regression.
//!
//! Every learner visits the training rows in a canonical order (by label,
//! then feature values), so fitting is independent of the row order given.

mod forest;
mod logreg;
mod nb;
mod svm;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub use forest::{Forest, Tree, TreeNode};
pub use logreg::LogRegState;
pub use nb::NaiveBayesState;
pub use svm::SvmState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("class {class} has no training rows")]
    MissingClass { class: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{rows} training rows for {classes} classes")]
    TooFewRows { rows: usize, classes: usize },
    #[error("{labels} labels for {rows} rows")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("negative feature value {value} at row {row}, column {col}")]
    NegativeFeature { row: usize, col: usize, value: f64 },
    #[error("model has not been fitted")]
    NotFitted,
    #[error("expected {expected} feature columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid baseline config: {0}")]
    BadConfig(String),
    #[error("bad baseline checkpoint: {0}")]
    BadCheckpoint(String),
}

pub type Result<T, E = BaselineError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    NaiveBayes,
    LinearSvm,
    RandomForest,
    LogisticRegression,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::NaiveBayes,
        BaselineKind::LinearSvm,
        BaselineKind::RandomForest,
        BaselineKind::LogisticRegression,
    ];

    /// Short name used on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            BaselineKind::NaiveBayes => "nb",
            BaselineKind::LinearSvm => "svm",
            BaselineKind::RandomForest => "rf",
            BaselineKind::LogisticRegression => "logreg",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "nb" | "naive_bayes" => Ok(BaselineKind::NaiveBayes),
            "svm" | "linear_svm" => Ok(BaselineKind::LinearSvm),
            "rf" | "random_forest" => Ok(BaselineKind::RandomForest),
            "logreg" | "lr" | "logistic_regression" => Ok(BaselineKind::LogisticRegression),
            _ => Err(format!("unknown baseline '{s}'")),
        }
    }
}

/// Hyperparameters for all four learners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Laplace smoothing.
    pub nb_alpha: f64,
    /// Inverse regularisation strength: the objective is
    /// `0.5 |w|^2 + C * sum(hinge)`.
    pub svm_c: f64,
    pub svm_learning_rate: f64,
    pub svm_max_iter: usize,
    pub rf_trees: usize,
    /// `None` grows trees until leaves are pure.
    pub rf_max_depth: Option<usize>,
    pub rf_min_samples_split: usize,
    pub logreg_l2: f64,
    pub logreg_learning_rate: f64,
    pub logreg_tol: f64,
    pub logreg_max_iter: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            nb_alpha: 1.0,
            svm_c: 1.0,
            svm_learning_rate: 1.0,
            svm_max_iter: 1000,
            rf_trees: 100,
            rf_max_depth: None,
            rf_min_samples_split: 2,
            logreg_l2: 1e-4,
            logreg_learning_rate: 1.0,
            logreg_tol: 1e-6,
            logreg_max_iter: 1000,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BaselineError::BadConfig(m.into()));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.nb_alpha) {
            return bad("nb_alpha must be positive");
        }
        if !positive(self.svm_c) || !positive(self.svm_learning_rate) {
            return bad("svm_c and svm_learning_rate must be positive");
        }
        if self.rf_trees == 0 || self.rf_min_samples_split < 2 || self.rf_max_depth == Some(0) {
            return bad("rf_trees, rf_max_depth must be positive and rf_min_samples_split at least 2");
        }
        if !(self.logreg_l2 >= 0.0) || !positive(self.logreg_learning_rate) || !positive(self.logreg_tol) {
            return bad("logreg_l2 must be non-negative, logreg_learning_rate and logreg_tol positive");
        }
        if self.svm_max_iter == 0 || self.logreg_max_iter == 0 {
            return bad("iteration limits must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedState {
    NaiveBayes(NaiveBayesState),
    LinearSvm(SvmState),
    RandomForest(Forest),
    LogisticRegression(LogRegState),
}

/// Outcome of an iterative fit. `converged == false` is a report, not an
/// error: the parameters after the last iteration are kept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    kind: BaselineKind,
    config: BaselineConfig,
    seed: u64,
    num_features: usize,
    num_classes: usize,
    fit_info: Option<FitInfo>,
    state: Option<FittedState>,
}

const BASELINE_FORMAT: &str = "absa-baseline";
const BASELINE_VERSION: u32 = 1;

/// Row order by label, then by feature values.
fn canonical_order(x: &Matrix, y: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.rows()).collect();
    idx.sort_by(|&a, &b| {
        y[a].cmp(&y[b]).then_with(|| {
            x.row(a)
                .iter()
                .zip(x.row(b))
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });
    idx
}

/// Index of the largest score; the lowest index wins ties.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    crate::model::argmax(scores)
}

impl BaselineModel {
    pub fn new(kind: BaselineKind, config: BaselineConfig, seed: u64) -> Self {
        BaselineModel {
            kind,
            config,
            seed,
            num_features: 0,
            num_classes: 0,
            fit_info: None,
            state: None,
        }
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&FittedState> {
        self.state.as_ref()
    }

    pub fn fit_info(&self) -> Option<FitInfo> {
        self.fit_info
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    /// Fits on rows of `x` with class ids `y` in `0..classes`. Every class
    /// must be present.
    pub fn fit(&mut self, x: &Matrix, y: &[usize], classes: usize) -> Result<()> {
        self.config.validate()?;
        if y.len() != x.rows() {
            return Err(BaselineError::LengthMismatch {
                rows: x.rows(),
                labels: y.len(),
            });
        }
        if classes < 2 || x.rows() < classes {
            return Err(BaselineError::TooFewRows { rows: x.rows(), classes });
        }
        if let Some(&label) = y.iter().find(|&&l| l >= classes) {
            return Err(BaselineError::LabelOutOfRange { label, classes });
        }
        if let Some(class) = (0..classes).find(|c| !y.contains(c)) {
            return Err(BaselineError::MissingClass { class });
        }
        if self.kind == BaselineKind::NaiveBayes {
            nb::check_nonnegative(x)?;
        }
        let order = canonical_order(x, y);
        let xs = x.select_rows(&order);
        let ys: Vec<usize> = order.iter().map(|&i| y[i]).collect();
        let (state, info) = match self.kind {
            BaselineKind::NaiveBayes => {
                let s = nb::fit(&xs, &ys, classes, self.config.nb_alpha);
                (FittedState::NaiveBayes(s), None)
            }
            BaselineKind::LinearSvm => {
                let (s, info) = svm::fit(&xs, &ys, classes, &self.config);
                (FittedState::LinearSvm(s), Some(info))
            }
            BaselineKind::RandomForest => {
                let f = forest::fit(&xs, &ys, classes, &self.config, self.seed);
                (FittedState::RandomForest(f), None)
            }
            BaselineKind::LogisticRegression => {
                let (s, info) = logreg::fit(&xs, &ys, classes, &self.config);
                (FittedState::LogisticRegression(s), Some(info))
            }
        };
        self.num_features = x.cols();
        self.num_classes = classes;
        self.fit_info = info;
        self.state = Some(state);
        Ok(())
    }

    fn fitted(&self, x: &Matrix) -> Result<&FittedState> {
        let state = self.state.as_ref().ok_or(BaselineError::NotFitted)?;
        if x.cols() != self.num_features {
            return Err(BaselineError::DimensionMismatch {
                expected: self.num_features,
                got: x.cols(),
            });
        }
        Ok(state)
    }

    /// Class id per row; ties in scores or votes go to the lower id.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        match self.fitted(x)? {
            FittedState::NaiveBayes(s) => s.predict(x),
            FittedState::LinearSvm(s) => Ok(x.iter_rows().map(|r| argmax(&s.decision(r))).collect()),
            FittedState::RandomForest(f) => Ok(x.iter_rows().map(|r| f.predict_row(r)).collect()),
            FittedState::LogisticRegression(s) => Ok(x.iter_rows().map(|r| argmax(&s.logits(r))).collect()),
        }
    }

    /// Class probability rows where the learner defines them (naive Bayes,
    /// logistic regression and the forest's vote shares).
    pub fn predict_proba(&self, x: &Matrix) -> Result<Option<Vec<Vec<f64>>>> {
        Ok(match self.fitted(x)? {
            FittedState::NaiveBayes(s) => Some(s.predict_proba(x)?),
            FittedState::LogisticRegression(s) => Some(x.iter_rows().map(|r| s.proba(r)).collect()),
            FittedState::RandomForest(f) => Some(x.iter_rows().map(|r| f.vote_shares(r)).collect()),
            FittedState::LinearSvm(_) => None,
        })
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        if self.state.is_none() {
            return Err(BaselineError::NotFitted);
        }
        let value = serde_json::json!({
            "format": BASELINE_FORMAT,
            "version": BASELINE_VERSION,
            "model": self,
        });
        Ok(serde_json::to_string(&value).expect("baseline serialises"))
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |m: String| BaselineError::BadCheckpoint(m);
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if value.get("format").and_then(|v| v.as_str()) != Some(BASELINE_FORMAT)
            || value.get("version").and_then(|v| v.as_u64()) != Some(BASELINE_VERSION as u64)
        {
            return Err(bad(format!("expected {BASELINE_FORMAT} v{BASELINE_VERSION}")));
        }
        let model: BaselineModel = serde_json::from_value(value["model"].clone()).map_err(|e| bad(e.to_string()))?;
        let kind_matches = matches!(
            (&model.state, model.kind),
            (Some(FittedState::NaiveBayes(_)), BaselineKind::NaiveBayes)
                | (Some(FittedState::LinearSvm(_)), BaselineKind::LinearSvm)
                | (Some(FittedState::RandomForest(_)), BaselineKind::RandomForest)
                | (Some(FittedState::LogisticRegression(_)), BaselineKind::LogisticRegression)
        );
        if !kind_matches {
            return Err(bad("state does not match kind".into()));
        }
        Ok(model)
    }
}

/// Builds and fits in one call.
pub fn fit(
    kind: BaselineKind,
    x: &Matrix,
    y: &[usize],
    classes: usize,
    config: &BaselineConfig,
    seed: u64,
) -> Result<BaselineModel> {
    let mut model = BaselineModel::new(kind, config.clone(), seed);
    model.fit(x, y, classes)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clusters() -> (Matrix, Vec<usize>) {
        let x = Matrix::from_rows(vec![
            vec![1.0, 0.1, 0.0],
            vec![0.9, 0.0, 0.1],
            vec![0.8, 0.2, 0.0],
            vec![0.0, 0.1, 1.0],
            vec![0.1, 0.0, 0.9],
            vec![0.0, 0.2, 0.8],
        ]);
        (x, vec![0, 0, 0, 1, 1, 1])
    }

    #[test]
    fn every_kind_separates_two_clusters() {
        let (x, y) = clusters();
        for kind in BaselineKind::ALL {
            let m = fit(kind, &x, &y, 2, &BaselineConfig::default(), 3).unwrap();
            assert_eq!(m.predict(&x).unwrap(), y, "{kind}");
        }
    }

    #[test]
    fn contract_errors() {
        let (x, y) = clusters();
        let cfg = BaselineConfig::default();
        for kind in BaselineKind::ALL {
            let unfitted = BaselineModel::new(kind, cfg.clone(), 0);
            assert_eq!(unfitted.predict(&x).unwrap_err(), BaselineError::NotFitted);
            assert_eq!(
                fit(kind, &x, &[0; 6], 2, &cfg, 0).unwrap_err(),
                BaselineError::MissingClass { class: 1 }
            );
            let m = fit(kind, &x, &y, 2, &cfg, 0).unwrap();
            assert_eq!(
                m.predict(&Matrix::zeros(1, 4)).unwrap_err(),
                BaselineError::DimensionMismatch { expected: 3, got: 4 }
            );
        }
        assert!(matches!(
            fit(BaselineKind::NaiveBayes, &x, &y, 7, &cfg, 0),
            Err(BaselineError::TooFewRows { .. })
        ));
        let mut neg = x.clone();
        neg.row_mut(2)[1] = -0.5;
        assert_eq!(
            fit(BaselineKind::NaiveBayes, &neg, &y, 2, &cfg, 0).unwrap_err(),
            BaselineError::NegativeFeature { row: 2, col: 1, value: -0.5 }
        );
    }

    #[test]
    fn checkpoints_round_trip() {
        let (x, y) = clusters();
        for kind in BaselineKind::ALL {
            let m = fit(kind, &x, &y, 2, &BaselineConfig::default(), 9).unwrap();
            let back = BaselineModel::from_checkpoint(&m.to_checkpoint().unwrap()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
        }
        assert!(BaselineModel::new(BaselineKind::NaiveBayes, BaselineConfig::default(), 0)
            .to_checkpoint()
            .is_err());
    }

    #[test]
    fn kind_names_parse() {
        for kind in BaselineKind::ALL {
            assert_eq!(kind.short_name().parse::<BaselineKind>().unwrap(), kind);
        }
        assert_eq!("Logistic-Regression".parse::<BaselineKind>().unwrap(), BaselineKind::LogisticRegression);
        assert!("knn".parse::<BaselineKind>().is_err());
    }
}
