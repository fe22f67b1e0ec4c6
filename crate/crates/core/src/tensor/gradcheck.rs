//! Central finite differences for checking analytic gradients.

use super::Tensor;

/// Denominator floor for [`relative_error`]; gradients smaller than this are
/// compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Numerical gradient of `f` with respect to `inputs[which]` by central
/// differences with step `eps`.
pub fn numeric_gradient<F>(mut f: F, inputs: &[Tensor], which: usize, eps: f64) -> Vec<f64>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut work = inputs.to_vec();
    let n = work[which].len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let orig = work[which].data()[i];
        work[which].data_mut()[i] = orig + eps;
        let plus = f(&work);
        work[which].data_mut()[i] = orig - eps;
        let minus = f(&work);
        work[which].data_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * eps));
    }
    out
}

/// Largest [`relative_error`] over paired entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}
