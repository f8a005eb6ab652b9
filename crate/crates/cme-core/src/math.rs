//! Scalar float helpers shared across the crate.
//!
//! In `no_std` builds the transcendental methods on `f64` are unavailable, so
//! [`FloatExt`] reroutes them through `libm`. Modules import the trait only
//! when the `std` feature is off; with `std` on, the inherent methods win.

use alloc::vec::Vec;

/// `f64` math methods backed by `libm` for `no_std` builds.
#[cfg(not(feature = "std"))]
pub trait FloatExt: Sized {
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, p: Self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn acos(self) -> Self;
    fn floor(self) -> Self;
    fn ceil(self) -> Self;
    fn round(self) -> Self;
}

#[cfg(not(feature = "std"))]
impl FloatExt for f64 {
    fn abs(self) -> Self {
        libm::fabs(self)
    }
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn ln(self) -> Self {
        libm::log(self)
    }
    fn powi(self, n: i32) -> Self {
        libm::pow(self, n as f64)
    }
    fn powf(self, p: Self) -> Self {
        libm::pow(self, p)
    }
    fn sin(self) -> Self {
        libm::sin(self)
    }
    fn cos(self) -> Self {
        libm::cos(self)
    }
    fn acos(self) -> Self {
        libm::acos(self)
    }
    fn floor(self) -> Self {
        libm::floor(self)
    }
    fn ceil(self) -> Self {
        libm::ceil(self)
    }
    fn round(self) -> Self {
        libm::round(self)
    }
}

/// `count` points from `lo` to `hi` inclusive; a single point sits at `lo`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count > 0, "linspace needs at least one point");
    if count == 1 {
        return alloc::vec![lo];
    }
    let step = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| lo + step * i as f64).collect()
}

pub fn mean(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "mean of empty slice");
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median of a sample; even lengths average the two central order statistics.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Type-7 (linear interpolation) sample quantile of unsorted data, `p` in [0, 1].
pub fn quantile_type7(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "quantile level must lie in [0, 1]");
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_type7_sorted(&sorted, p)
}

/// Type-7 quantile of already sorted data.
pub fn quantile_type7_sorted(sorted: &[f64], p: f64) -> f64 {
    #[cfg(not(feature = "std"))]
    use crate::math::FloatExt;
    let n = sorted.len();
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Nearest-rank quantile: the `ceil(p * n)`-th smallest value (1-indexed).
pub fn quantile_nearest_rank(values: &[f64], p: f64) -> f64 {
    #[cfg(not(feature = "std"))]
    use crate::math::FloatExt;
    assert!(!values.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "quantile level must lie in [0, 1]");
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

/// Numerically stable `log(mean(exp(x_i)))`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    #[cfg(not(feature = "std"))]
    use crate::math::FloatExt;
    assert!(!values.is_empty(), "log_mean_exp of empty slice");
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + (sum / values.len() as f64).ln()
}

/// Softmax of a slice, stable under large inputs; sums to one.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    #[cfg(not(feature = "std"))]
    use crate::math::FloatExt;
    assert!(!values.is_empty(), "softmax of empty slice");
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
