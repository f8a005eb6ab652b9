//! Gaussian density kernel, Gram matrices, and bandwidth heuristics.
//!
//! The density kernel `k_sigma(y, y') = (2*pi*sigma^2)^(-d/2) *
//! exp(-||y - y'||^2 / (2*sigma^2))` integrates to one in `y`, so the same
//! object acts as a reproducing kernel and as a smoothing kernel: an inner
//! product against an embedding reads off an (unnormalized) density value.

use alloc::format;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(not(feature = "std"))]
use crate::math::FloatExt;
use crate::math::quantile_nearest_rank;
use crate::matrix::Mat;
use crate::{Error, Result};

const TWO_PI: f64 = core::f64::consts::TAU;

/// Cap on the number of points the median heuristic inspects.
const MEDIAN_SUBSAMPLE_CAP: usize = 1000;
/// Fixed stream for the median-heuristic subsample so the op stays a pure
/// function of its input.
const MEDIAN_SUBSAMPLE_SEED: u64 = 0x6d65_6469_616e;

/// Gaussian density kernel with bandwidth `sigma` on `R^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDensityKernel {
    sigma: f64,
    dim: usize,
}

impl GaussianDensityKernel {
    pub fn new(sigma: f64, dim: usize) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "kernel bandwidth must be positive and finite, got {sigma}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "kernel dimension must be at least 1".into(),
            ));
        }
        Ok(Self { sigma, dim })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The same kernel with bandwidth `factor * sigma`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.sigma * factor, self.dim)
    }

    /// Normalization constant `(2*pi*sigma^2)^(-d/2)`, the peak value `k(y, y)`.
    pub fn peak(&self) -> f64 {
        (TWO_PI * self.sigma * self.sigma).powf(-0.5 * self.dim as f64)
    }

    /// Kernel value from a squared distance.
    #[inline]
    pub fn eval_sq_dist(&self, sq_dist: f64) -> f64 {
        self.peak() * (-sq_dist / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn eval(&self, y: &[f64], y2: &[f64]) -> Result<f64> {
        self.check_point(y)?;
        self.check_point(y2)?;
        Ok(self.eval_sq_dist(sq_dist(y, y2)))
    }

    /// Kernel value together with its derivative in `sigma`.
    ///
    /// `d k / d sigma = k * (||y - y'||^2 / sigma^3 - d / sigma)`.
    pub fn eval_with_sigma_grad(&self, y: &[f64], y2: &[f64]) -> Result<(f64, f64)> {
        self.check_point(y)?;
        self.check_point(y2)?;
        let d2 = sq_dist(y, y2);
        let k = self.eval_sq_dist(d2);
        Ok((k, k * self.sigma_grad_factor(d2)))
    }

    /// Multiplier turning a kernel value into its `sigma`-derivative.
    #[inline]
    pub fn sigma_grad_factor(&self, sq_dist: f64) -> f64 {
        sq_dist / (self.sigma * self.sigma * self.sigma) - self.dim as f64 / self.sigma
    }

    /// Gram matrix `G[i][j] = k(a_i, b_j)` for row-wise point sets.
    pub fn gram(&self, a: &Mat, b: &Mat) -> Result<Mat> {
        if a.rows() == 0 || b.rows() == 0 {
            return Err(Error::InvalidArgument("gram of an empty point set".into()));
        }
        if a.cols() != self.dim || b.cols() != self.dim {
            return Err(Error::Shape(format!(
                "gram points have widths {} and {}, kernel dimension is {}",
                a.cols(),
                b.cols(),
                self.dim
            )));
        }
        let peak = self.peak();
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        Ok(Mat::from_fn(a.rows(), b.rows(), |i, j| {
            peak * (-sq_dist(a.row(i), b.row(j)) * inv).exp()
        }))
    }

    /// Gram matrix over scalar point sets (`dim` must be 1).
    pub fn gram_1d(&self, a: &[f64], b: &[f64]) -> Result<Mat> {
        if self.dim != 1 {
            return Err(Error::Shape(format!(
                "gram_1d requires a 1-dimensional kernel, dimension is {}",
                self.dim
            )));
        }
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidArgument("gram of an empty point set".into()));
        }
        let peak = self.peak();
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        Ok(Mat::from_fn(a.len(), b.len(), |i, j| {
            let d = a[i] - b[j];
            peak * (-d * d * inv).exp()
        }))
    }

    fn check_point(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::Shape(format!(
                "point has length {}, kernel dimension is {}",
                y.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// `w' G w` with `G` the Gram matrix of `eta` under `k`; nonnegative up to
/// round-off because `G` is positive semidefinite.
pub fn quadratic_form(kernel: &GaussianDensityKernel, eta: &[f64], weights: &[f64]) -> Result<f64> {
    if eta.len() != weights.len() {
        return Err(Error::Shape(format!(
            "quadratic form with {} points but {} weights",
            eta.len(),
            weights.len()
        )));
    }
    if kernel.dim() != 1 {
        return Err(Error::Shape(
            "quadratic_form operates on scalar location grids".into(),
        ));
    }
    let peak = kernel.peak();
    let inv = 1.0 / (2.0 * kernel.sigma() * kernel.sigma());
    let mut total = 0.0;
    for (i, (&ei, &wi)) in eta.iter().zip(weights).enumerate() {
        // Diagonal plus twice the strict upper triangle, by symmetry.
        total += wi * wi * peak;
        for (&ej, &wj) in eta[i + 1..].iter().zip(&weights[i + 1..]) {
            let d = ei - ej;
            total += 2.0 * wi * wj * peak * (-d * d * inv).exp();
        }
    }
    Ok(total)
}

/// Closed form and quadrature sides of the Gaussian convolution identity
/// `integral k_sigma(eta_a, y) k_sigma(y, eta_b) dy = k_{sqrt2 sigma}(eta_a, eta_b)`.
#[derive(Clone, Copy, Debug)]
pub struct ConvolutionCheck {
    pub closed_form: f64,
    pub quadrature: f64,
}

impl ConvolutionCheck {
    pub fn difference(&self) -> f64 {
        (self.closed_form - self.quadrature).abs()
    }
}

/// Evaluates both sides of the convolution identity for scalar points.
///
/// The quadrature side integrates the kernel product with adaptive Simpson
/// over `[c - 10*sqrt2*sigma, c + 10*sqrt2*sigma]` around the midpoint `c`;
/// the Gaussian tails beyond that window are below 1e-20.
pub fn convolution_identity_check(sigma: f64, eta_a: f64, eta_b: f64) -> Result<ConvolutionCheck> {
    let narrow = GaussianDensityKernel::new(sigma, 1)?;
    let wide = narrow.scaled(core::f64::consts::SQRT_2)?;
    let closed_form = wide.eval(&[eta_a], &[eta_b])?;
    let center = 0.5 * (eta_a + eta_b);
    let half_width = 10.0 * core::f64::consts::SQRT_2 * sigma;
    let quadrature = adaptive_simpson(
        |y| narrow.eval_sq_dist((eta_a - y) * (eta_a - y)) * narrow.eval_sq_dist((y - eta_b) * (y - eta_b)),
        center - half_width,
        center + half_width,
        1e-12,
        40,
    );
    Ok(ConvolutionCheck {
        closed_form,
        quadrature,
    })
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64, max_depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, width: f64) -> f64 {
        width / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let mid = 0.5 * (lo + hi);
        let lm = 0.5 * (lo + mid);
        let rm = 0.5 * (mid + hi);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, mid - lo);
        let right = simpson(fm, frm, fb, hi - mid);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, lo, mid, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, mid, hi, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let mid = 0.5 * (lo + hi);
    let fa = f(lo);
    let fm = f(mid);
    let fb = f(hi);
    let whole = simpson(fa, fm, fb, hi - lo);
    recurse(&f, lo, hi, fa, fm, fb, whole, tol, max_depth)
}

/// Median of pairwise Euclidean distances, the standard bandwidth heuristic.
///
/// Sets larger than 1000 points are uniformly subsampled (seeded, so the
/// result is still a pure function of the input).
pub fn median_heuristic(points: &Mat) -> Result<f64> {
    if points.rows() < 2 {
        return Err(Error::InvalidArgument(
            "median heuristic needs at least 2 points".into(),
        ));
    }
    let kept: Vec<usize> = if points.rows() > MEDIAN_SUBSAMPLE_CAP {
        let mut rng = ChaCha8Rng::seed_from_u64(MEDIAN_SUBSAMPLE_SEED);
        let mut idx =
            rand::seq::index::sample(&mut rng, points.rows(), MEDIAN_SUBSAMPLE_CAP).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..points.rows()).collect()
    };
    let mut distances = Vec::with_capacity(kept.len() * (kept.len() - 1) / 2);
    for (i, &a) in kept.iter().enumerate() {
        for &b in &kept[i + 1..] {
            distances.push(sq_dist(points.row(a), points.row(b)).sqrt());
        }
    }
    let med = crate::math::median(&distances);
    if med <= 0.0 {
        return Err(Error::InvalidArgument(
            "median pairwise distance is zero; bandwidth would be degenerate".into(),
        ));
    }
    Ok(med)
}

/// Family of Gaussian density kernels with uniform selection weights.
#[derive(Clone, Debug)]
pub struct KernelFamily {
    kernels: Vec<GaussianDensityKernel>,
}

impl KernelFamily {
    /// Builds a family from bandwidths, which must be positive and
    /// non-decreasing. Repeated bandwidths are kept: a uniform mixture over
    /// duplicates is equivalent to one over the distinct values.
    pub fn new(sigmas: &[f64], dim: usize) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::InvalidArgument("empty kernel family".into()));
        }
        if sigmas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(
                "kernel family bandwidths must be non-decreasing".into(),
            ));
        }
        let kernels = sigmas
            .iter()
            .map(|&s| GaussianDensityKernel::new(s, dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kernels })
    }

    pub fn kernels(&self) -> &[GaussianDensityKernel] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.sigma()).collect()
    }
}

/// Bandwidth grid for kernel fusion: `count` values uniformly spaced between
/// half the 5th and half the 95th percentile (nearest rank) of the pairwise
/// distances of the location grid.
pub fn fuse_bandwidth_grid(eta: &[f64], count: usize) -> Result<KernelFamily> {
    if eta.len() < 2 {
        return Err(Error::InvalidArgument(
            "bandwidth grid needs at least 2 locations".into(),
        ));
    }
    if count == 0 {
        return Err(Error::InvalidArgument(
            "bandwidth grid needs at least 1 kernel".into(),
        ));
    }
    let mut distances = Vec::with_capacity(eta.len() * (eta.len() - 1) / 2);
    for (i, &a) in eta.iter().enumerate() {
        for &b in &eta[i + 1..] {
            distances.push((a - b).abs());
        }
    }
    let lo = 0.5 * quantile_nearest_rank(&distances, 0.05);
    let hi = 0.5 * quantile_nearest_rank(&distances, 0.95);
    if lo <= 0.0 {
        return Err(Error::InvalidArgument(
            "location grid is degenerate: 5th-percentile pairwise distance is zero".into(),
        ));
    }
    let sigmas = if count == 1 {
        alloc::vec![0.5 * (lo + hi)]
    } else {
        crate::math::linspace(lo, hi, count)
    };
    KernelFamily::new(&sigmas, 1)
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eval_matches_closed_form_values() {
        let k = GaussianDensityKernel::new(1.0, 1).unwrap();
        assert_abs_diff_eq!(k.eval(&[0.0], &[0.0]).unwrap(), 0.3989422804, epsilon = 1e-9);
        assert_abs_diff_eq!(k.eval(&[0.0], &[2.0]).unwrap(), 0.05399097, epsilon = 1e-7);

        // Zero separation always gives the normalization constant.
        let k = GaussianDensityKernel::new(0.37, 3).unwrap();
        let expect = (TWO_PI * 0.37 * 0.37).powf(-1.5);
        assert_abs_diff_eq!(k.eval(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), expect);
    }

    #[test]
    fn eval_rejects_dimension_mismatch() {
        let k = GaussianDensityKernel::new(1.0, 2).unwrap();
        assert!(matches!(
            k.eval(&[0.0], &[0.0, 1.0]),
            Err(crate::Error::Shape(_))
        ));
    }

    #[test]
    fn constructor_rejects_bad_bandwidths() {
        assert!(GaussianDensityKernel::new(0.0, 1).is_err());
        assert!(GaussianDensityKernel::new(-1.0, 1).is_err());
        assert!(GaussianDensityKernel::new(f64::NAN, 1).is_err());
        assert!(GaussianDensityKernel::new(1.0, 0).is_err());
    }

    #[test]
    fn sigma_gradient_matches_finite_differences() {
        for (sigma, d2) in [(0.7, 0.3), (1.3, 4.0), (2.5, 0.0), (0.2, 1.7)] {
            let k = GaussianDensityKernel::new(sigma, 1).unwrap();
            let y2 = d2_to_point(d2);
            let (_, grad) = k.eval_with_sigma_grad(&[0.0], &[y2]).unwrap();
            let numeric = crate::numdiff::central_difference(
                |s| {
                    GaussianDensityKernel::new(s, 1)
                        .unwrap()
                        .eval(&[0.0], &[y2])
                        .unwrap()
                },
                sigma,
                1e-6,
            );
            assert_abs_diff_eq!(grad, numeric, epsilon = 1e-7);
        }
    }

    fn d2_to_point(d2: f64) -> f64 {
        d2.sqrt()
    }

    #[test]
    fn gram_is_symmetric_and_psd() {
        let k = GaussianDensityKernel::new(0.7, 1).unwrap();
        let pts = [0.1, -0.4, 1.3, 2.0, -2.2, 0.11];
        let g = k.gram_1d(&pts, &pts).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(g.get(i, j), g.get(j, i), "gram must be exactly symmetric");
            }
        }
        let dm = nalgebra::DMatrix::from_fn(6, 6, |i, j| g.get(i, j));
        let eigs = dm.symmetric_eigenvalues();
        assert!(
            eigs.iter().all(|&e| e >= -1e-10),
            "gram eigenvalues must be >= -1e-10, got {eigs:?}"
        );
    }

    #[test]
    fn gram_matches_eval_and_handles_rectangles() {
        let k = GaussianDensityKernel::new(0.9, 2).unwrap();
        let a = Mat::from_vec(2, 2, vec![0.0, 0.0, 1.0, -1.0]);
        let b = Mat::from_vec(3, 2, vec![0.5, 0.5, -0.5, 0.0, 2.0, 2.0]);
        let g = k.gram(&a, &b).unwrap();
        assert_eq!((g.rows(), g.cols()), (2, 3));
        for i in 0..2 {
            for j in 0..3 {
                let direct = k.eval(a.row(i), b.row(j)).unwrap();
                assert_abs_diff_eq!(g.get(i, j), direct, epsilon = 1e-15);
            }
        }
        assert!(k.gram(&a, &Mat::zeros(0, 2)).is_err());
    }

    #[test]
    fn quadratic_form_hand_values() {
        let k1 = GaussianDensityKernel::new(1.0, 1).unwrap();
        let eta = [0.0, 1.0];
        let w = [0.5, 0.5];
        let q1 = quadratic_form(&k1, &eta, &w).unwrap();
        assert_abs_diff_eq!(q1, 0.320455, epsilon = 1e-5);

        let k2 = k1.scaled(core::f64::consts::SQRT_2).unwrap();
        let q2 = quadratic_form(&k2, &eta, &w).unwrap();
        assert_abs_diff_eq!(q2, 0.250890, epsilon = 1e-5);
        assert!(q2 <= q1, "wider bandwidth must not increase the form");

        assert_eq!(quadratic_form(&k1, &eta, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(quadratic_form(&k1, &eta, &[1.0]).is_err());
    }

    #[test]
    fn convolution_identity_closed_forms() {
        let c = convolution_identity_check(1.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(c.closed_form, 0.2820948, epsilon = 1e-7);
        assert!(c.difference() < 1e-8, "difference {}", c.difference());

        let c = convolution_identity_check(1.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(c.closed_form, 0.2196956, epsilon = 1e-7);
        assert!(c.difference() < 1e-8);

        let c = convolution_identity_check(0.5, -1.0, 2.0).unwrap();
        assert!(c.difference() < 1e-8, "difference {}", c.difference());
    }

    #[test]
    fn kernel_mass_integrates_to_one() {
        for sigma in [0.1, 0.7, 1.0, 3.0] {
            let k = GaussianDensityKernel::new(sigma, 1).unwrap();
            let center = 0.4;
            let mass = adaptive_simpson(
                |y| k.eval_sq_dist((y - center) * (y - center)),
                center - 10.0 * sigma,
                center + 10.0 * sigma,
                1e-12,
                40,
            );
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn median_heuristic_small_cases() {
        let pts = Mat::from_vec(2, 1, vec![0.0, 1.0]);
        assert_abs_diff_eq!(median_heuristic(&pts).unwrap(), 1.0);

        let pts = Mat::from_vec(3, 1, vec![0.0, 1.0, 2.0]);
        assert_abs_diff_eq!(median_heuristic(&pts).unwrap(), 1.0);

        let pts = Mat::from_vec(3, 1, vec![2.0, 2.0, 2.0]);
        assert!(median_heuristic(&pts).is_err());
    }

    #[test]
    fn median_heuristic_of_standard_normals() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..500)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let pts = Mat::from_vec(500, 1, draws);
        let med = median_heuristic(&pts).unwrap();
        assert!(
            (med - 0.95).abs() < 0.1,
            "median heuristic {med} outside 0.95 +/- 0.1"
        );
    }

    #[test]
    fn median_heuristic_subsampling_is_deterministic() {
        let pts = Mat::from_fn(1500, 1, |i, _| (i as f64 * 0.731).sin() * 3.0);
        let a = median_heuristic(&pts).unwrap();
        let b = median_heuristic(&pts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fuse_grid_on_uniform_51_point_grid() {
        let eta = crate::math::linspace(-100.0, 100.0, 51);
        let fam = fuse_bandwidth_grid(&eta, 10).unwrap();
        let sigmas = fam.sigmas();
        assert_eq!(sigmas.len(), 10);

        // Oracle: brute-force distance multiset and nearest-rank quantiles.
        let mut dists = Vec::new();
        for i in 0..eta.len() {
            for j in i + 1..eta.len() {
                dists.push((eta[i] - eta[j]).abs());
            }
        }
        assert_eq!(dists.len(), 51 * 50 / 2);
        dists.sort_by(f64::total_cmp);
        let q05 = dists[(0.05_f64 * 1275.0).ceil() as usize - 1];
        let q95 = dists[(0.95_f64 * 1275.0).ceil() as usize - 1];
        assert_abs_diff_eq!(sigmas[0], 0.5 * q05, epsilon = 1e-12);
        assert_abs_diff_eq!(sigmas[9], 0.5 * q95, epsilon = 1e-12);
        // Hand count: gaps are multiples of 4; the 64th smallest distance is 8
        // and the 1212th is 160, so the bandwidths span [4, 80].
        assert_abs_diff_eq!(sigmas[0], 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sigmas[9], 80.0, epsilon = 1e-9);
        for w in sigmas.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], (0.5 * q95 - 0.5 * q05) / 9.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fuse_grid_degenerate_cases() {
        let fam = fuse_bandwidth_grid(&[0.0, 1.0], 10).unwrap();
        assert!(fam.sigmas().iter().all(|&s| s == 0.5));

        let fam = fuse_bandwidth_grid(&crate::math::linspace(0.0, 1.0, 11), 1).unwrap();
        assert_eq!(fam.len(), 1);

        assert!(fuse_bandwidth_grid(&[1.0], 10).is_err());
        assert!(fuse_bandwidth_grid(&[1.0, 1.0], 10).is_err());
    }
}
