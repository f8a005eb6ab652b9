//! Central finite differences.
//!
//! These routines only evaluate the supplied closure; they share no code with
//! the analytic gradients elsewhere in the crate, so tests can use them as an
//! independent oracle.

use alloc::vec::Vec;

/// Central-difference derivative of a scalar function at `x`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    assert!(h > 0.0, "step size must be positive");
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central-difference gradient of `f` at `x`, one coordinate at a time.
pub fn gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "step size must be positive");
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + h;
        let plus = f(&point);
        point[i] = orig - h;
        let minus = f(&point);
        point[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// Largest relative disagreement between analytic and numerical gradients.
///
/// Uses `|a - n| / max(1, |a|, |n|)` per coordinate so near-zero entries are
/// compared absolutely and large entries relatively.
pub fn max_relative_error(analytic: &[f64], numerical: &[f64]) -> f64 {
    assert_eq!(
        analytic.len(),
        numerical.len(),
        "gradient length mismatch: {} vs {}",
        analytic.len(),
        numerical.len()
    );
    let mut worst = 0.0_f64;
    for (&a, &n) in analytic.iter().zip(numerical) {
        let scale = 1.0_f64.max(a.abs()).max(n.abs());
        worst = worst.max((a - n).abs() / scale);
    }
    worst
}
