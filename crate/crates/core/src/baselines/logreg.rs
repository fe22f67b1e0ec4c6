use serde::{Deserialize, Serialize};

use super::{BaselineConfig, FitInfo};
use crate::matrix::Matrix;

/// Multinomial logistic regression: one weight row and bias per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegState {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LogRegState {
    pub fn zeros(classes: usize, features: usize) -> Self {
        LogRegState {
            weights: vec![vec![0.0; features]; classes],
            bias: vec![0.0; classes],
        }
    }

    pub fn logits(&self, row: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(row).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    pub fn proba(&self, row: &[f64]) -> Vec<f64> {
        let z = self.logits(row);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = e.iter().sum();
        e.iter().map(|v| v / total).collect()
    }
}

/// Full-batch gradient descent on mean cross-entropy plus
/// `0.5 * l2 * |W|^2` (biases unpenalised). Stops when the largest gradient
/// entry falls below the tolerance.
pub(super) fn fit(x: &Matrix, y: &[usize], classes: usize, cfg: &BaselineConfig) -> (LogRegState, FitInfo) {
    let (n, v) = (x.rows(), x.cols());
    let mut s = LogRegState::zeros(classes, v);
    let mut gw = vec![vec![0.0; v]; classes];
    let mut gb = vec![0.0; classes];
    for iter in 1..=cfg.logreg_max_iter {
        for (g, w) in gw.iter_mut().zip(&s.weights) {
            g.iter_mut().zip(w).for_each(|(gv, wv)| *gv = cfg.logreg_l2 * wv);
        }
        gb.fill(0.0);
        for (r, &label) in x.iter_rows().zip(y) {
            let p = s.proba(r);
            for k in 0..classes {
                let d = (p[k] - if k == label { 1.0 } else { 0.0 }) / n as f64;
                gb[k] += d;
                gw[k].iter_mut().zip(r).for_each(|(g, xv)| *g += d * xv);
            }
        }
        let max_grad = gw.iter().flatten().chain(&gb).fold(0.0f64, |m, g| m.max(g.abs()));
        if max_grad < cfg.logreg_tol {
            return (
                s,
                FitInfo {
                    iterations: iter - 1,
                    converged: true,
                },
            );
        }
        let lr = cfg.logreg_learning_rate;
        for k in 0..classes {
            s.weights[k].iter_mut().zip(&gw[k]).for_each(|(w, g)| *w -= lr * g);
            s.bias[k] -= lr * gb[k];
        }
    }
    (
        s,
        FitInfo {
            iterations: cfg.logreg_max_iter,
            converged: false,
        },
    )
}
