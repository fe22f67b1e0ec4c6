use serde::{Deserialize, Serialize};

use super::{argmax, BaselineError, Result};
use crate::matrix::Matrix;

/// Multinomial naive Bayes parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesState {
    pub alpha: f64,
    /// `ln(N_c / N)`
    pub log_prior: Vec<f64>,
    /// `[C][V]`: `ln((f_cj + alpha) / (sum_j f_cj + alpha V))`
    pub log_likelihood: Vec<Vec<f64>>,
}

pub(super) fn check_nonnegative(x: &Matrix) -> Result<()> {
    for (row, r) in x.iter_rows().enumerate() {
        if let Some((col, &value)) = r.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(BaselineError::NegativeFeature { row, col, value });
        }
    }
    Ok(())
}

pub(super) fn fit(x: &Matrix, y: &[usize], classes: usize, alpha: f64) -> NaiveBayesState {
    let v = x.cols();
    let mut counts = vec![vec![0.0; v]; classes];
    let mut docs = vec![0usize; classes];
    for (r, &c) in x.iter_rows().zip(y) {
        docs[c] += 1;
        for (acc, val) in counts[c].iter_mut().zip(r) {
            *acc += val;
        }
    }
    let n = y.len() as f64;
    let log_prior = docs.iter().map(|&d| (d as f64 / n).ln()).collect();
    let log_likelihood = counts
        .iter()
        .map(|f| {
            let denom = f.iter().sum::<f64>() + alpha * v as f64;
            f.iter().map(|fj| ((fj + alpha) / denom).ln()).collect()
        })
        .collect();
    NaiveBayesState {
        alpha,
        log_prior,
        log_likelihood,
    }
}

impl NaiveBayesState {
    /// Unnormalised log posterior per class.
    pub fn joint_log_likelihood(&self, row: &[f64]) -> Vec<f64> {
        self.log_prior
            .iter()
            .zip(&self.log_likelihood)
            .map(|(p, ll)| p + row.iter().zip(ll).map(|(x, l)| x * l).sum::<f64>())
            .collect()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        check_nonnegative(x)?;
        Ok(x.iter_rows().map(|r| argmax(&self.joint_log_likelihood(r))).collect())
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        check_nonnegative(x)?;
        Ok(x
            .iter_rows()
            .map(|r| {
                let jll = self.joint_log_likelihood(r);
                let max = jll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exp: Vec<f64> = jll.iter().map(|j| (j - max).exp()).collect();
                let total: f64 = exp.iter().sum();
                exp.iter().map(|e| e / total).collect()
            })
            .collect())
    }
}
