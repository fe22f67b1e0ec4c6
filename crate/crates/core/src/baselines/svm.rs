use serde::{Deserialize, Serialize};

use super::{BaselineConfig, FitInfo};
use crate::matrix::Matrix;

/// One weight vector and bias per class (one-vs-rest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmState {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl SvmState {
    pub fn decision(&self, row: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(row).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }
}

/// `0.5 |w|^2 + C * sum(max(0, 1 - y (w.x + b)))`, divided by N.
fn objective(w: &[f64], b: f64, x: &Matrix, sign: &[f64], c: f64) -> f64 {
    let n = x.rows() as f64;
    let hinge: f64 = x
        .iter_rows()
        .zip(sign)
        .map(|(r, s)| (1.0 - s * (b + w.iter().zip(r).map(|(a, v)| a * v).sum::<f64>())).max(0.0))
        .sum();
    (0.5 * w.iter().map(|a| a * a).sum::<f64>() + c * hinge) / n
}

/// Full-batch subgradient descent with step `lr / sqrt(t)`, keeping the best
/// iterate. Reported as converged when the best objective moved by less
/// than 1e-6 (relative) over the final tenth of the iterations.
fn fit_binary(x: &Matrix, sign: &[f64], cfg: &BaselineConfig) -> (Vec<f64>, f64, bool) {
    let (n, v) = (x.rows() as f64, x.cols());
    let c = cfg.svm_c;
    let mut w = vec![0.0; v];
    let mut b = 0.0;
    let mut best = (objective(&w, b, x, sign, c), w.clone(), b);
    let checkpoint = cfg.svm_max_iter - cfg.svm_max_iter / 10;
    let mut at_checkpoint = best.0;
    let mut gw = vec![0.0; v];
    for t in 1..=cfg.svm_max_iter {
        gw.iter_mut().zip(&w).for_each(|(g, a)| *g = a / n);
        let mut gb = 0.0;
        for (r, &s) in x.iter_rows().zip(sign) {
            let margin = s * (b + w.iter().zip(r).map(|(a, x)| a * x).sum::<f64>());
            if margin < 1.0 {
                for (g, xv) in gw.iter_mut().zip(r) {
                    *g -= c * s * xv / n;
                }
                gb -= c * s / n;
            }
        }
        let step = cfg.svm_learning_rate / (t as f64).sqrt();
        w.iter_mut().zip(&gw).for_each(|(a, g)| *a -= step * g);
        b -= step * gb;
        let obj = objective(&w, b, x, sign, c);
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
        if t == checkpoint {
            at_checkpoint = best.0;
        }
    }
    let converged = (at_checkpoint - best.0) <= 1e-6 * at_checkpoint.abs().max(1e-12);
    (best.1, best.2, converged)
}

pub(super) fn fit(x: &Matrix, y: &[usize], classes: usize, cfg: &BaselineConfig) -> (SvmState, FitInfo) {
    let mut weights = Vec::with_capacity(classes);
    let mut bias = Vec::with_capacity(classes);
    let mut converged = true;
    for k in 0..classes {
        let sign: Vec<f64> = y.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        let (w, b, ok) = fit_binary(x, &sign, cfg);
        weights.push(w);
        bias.push(b);
        converged &= ok;
    }
    (
        SvmState { weights, bias },
        FitInfo {
            iterations: cfg.svm_max_iter,
            converged,
        },
    )
}
