//! Distribution-comparison metrics for density evaluation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use crate::math::FloatExt;
use crate::estimator::CMEmbedding;
use crate::kernels::GaussianDensityKernel;
use crate::math::quantile_type7_sorted;
use crate::matrix::Mat;
use crate::{Error, Result};

/// One named metric evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    /// Spread across repeated runs, if the metric was aggregated.
    pub dispersion: Option<f64>,
    pub n_conditioning_points: usize,
}

impl MetricReport {
    pub fn new(
        name: &str,
        value: f64,
        dispersion: Option<f64>,
        n_conditioning_points: usize,
    ) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "metric {name} evaluated to non-finite {value}"
            )));
        }
        Ok(Self {
            name: name.into(),
            value,
            dispersion,
            n_conditioning_points,
        })
    }
}

/// Wasserstein-1 distance between equal-size 1-D empirical distributions.
/// Sorting both sides realizes the optimal coupling exactly.
pub fn wasserstein1(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    if samples_a.len() != samples_b.len() {
        return Err(Error::InvalidArgument(format!(
            "sample sets must be the same size, got {} and {}",
            samples_a.len(),
            samples_b.len()
        )));
    }
    let mut a = samples_a.to_vec();
    let mut b = samples_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

/// Quantile interval coverage error.
///
/// For each conditioning point, `generated` row `i` induces `bins` quantile
/// intervals with boundaries at levels `j / bins` (linear interpolation
/// between order statistics). `r_j` is the fraction of true outputs landing
/// in interval `j`, counted low-inclusive and high-exclusive except for the
/// last interval, which includes its upper boundary. Returns
/// `(1/bins) * sum_j |r_j - 1/bins|`.
pub fn qice(true_y: &[f64], generated: &Mat, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "qice needs at least 2 bins, got {bins}"
        )));
    }
    if true_y.is_empty() {
        return Err(Error::InvalidArgument("no conditioning points".into()));
    }
    if generated.rows() != true_y.len() {
        return Err(Error::Shape(format!(
            "{} true outputs but {} generated rows",
            true_y.len(),
            generated.rows()
        )));
    }
    if generated.cols() < bins {
        return Err(Error::InvalidArgument(format!(
            "need at least {bins} generated samples per point, got {}",
            generated.cols()
        )));
    }

    let mut counts = alloc::vec![0usize; bins];
    let mut boundaries = alloc::vec![0.0; bins + 1];
    let mut row = Vec::with_capacity(generated.cols());
    for (i, &y) in true_y.iter().enumerate() {
        row.clear();
        row.extend_from_slice(generated.row(i));
        row.sort_by(f64::total_cmp);
        for (j, b) in boundaries.iter_mut().enumerate() {
            *b = quantile_type7_sorted(&row, j as f64 / bins as f64);
        }
        for j in 0..bins {
            let in_bin = if j + 1 == bins {
                y >= boundaries[j] && y <= boundaries[j + 1]
            } else {
                y >= boundaries[j] && y < boundaries[j + 1]
            };
            if in_bin {
                counts[j] += 1;
                break;
            }
        }
    }

    let n = true_y.len() as f64;
    let target = 1.0 / bins as f64;
    let total: f64 = counts
        .iter()
        .map(|&c| (c as f64 / n - target).abs())
        .sum();
    Ok(total / bins as f64)
}

/// Root mean squared error between true outputs and per-point means of the
/// generated samples.
pub fn rmse(true_y: &[f64], generated: &Mat) -> Result<f64> {
    if true_y.is_empty() {
        return Err(Error::InvalidArgument("no conditioning points".into()));
    }
    if generated.rows() != true_y.len() || generated.cols() == 0 {
        return Err(Error::Shape(format!(
            "{} true outputs but generated samples are {}x{}",
            true_y.len(),
            generated.rows(),
            generated.cols()
        )));
    }
    let m = generated.cols() as f64;
    let mut total = 0.0;
    for (i, &y) in true_y.iter().enumerate() {
        let mean = generated.row(i).iter().sum::<f64>() / m;
        total += (y - mean) * (y - mean);
    }
    Ok((total / true_y.len() as f64).sqrt())
}

/// Squared MMD between weighted atom sets under a shared kernel:
/// `w' K_aa w - 2 w' K_ab v + v' K_bb v`.
///
/// All three terms run through the same bilinear loop, so identical inputs
/// cancel exactly; tiny negatives below -1e-10 indicate a caller bug.
pub fn squared_mmd(
    kernel: &GaussianDensityKernel,
    atoms_a: &[f64],
    weights_a: &[f64],
    atoms_b: &[f64],
    weights_b: &[f64],
) -> Result<f64> {
    if atoms_a.len() != weights_a.len() || atoms_b.len() != weights_b.len() {
        return Err(Error::Shape("atom/weight length mismatch".into()));
    }
    if atoms_a.is_empty() || atoms_b.is_empty() {
        return Err(Error::InvalidArgument("empty atom set".into()));
    }
    let aa = bilinear(kernel, atoms_a, weights_a, atoms_a, weights_a);
    let ab = bilinear(kernel, atoms_a, weights_a, atoms_b, weights_b);
    let bb = bilinear(kernel, atoms_b, weights_b, atoms_b, weights_b);
    Ok(aa - 2.0 * ab + bb)
}

/// Squared MMD between two embeddings, which must share the kernel.
pub fn squared_mmd_embeddings(a: &CMEmbedding, b: &CMEmbedding) -> Result<f64> {
    if a.kernel().sigma() != b.kernel().sigma() || a.kernel().dim() != b.kernel().dim() {
        return Err(Error::InvalidArgument(
            "embeddings must share a kernel to compare in MMD".into(),
        ));
    }
    squared_mmd(
        &a.kernel().clone(),
        a.atoms(),
        a.weights(),
        b.atoms(),
        b.weights(),
    )
}

/// Squared MMD from an embedding to an unweighted sample set.
pub fn squared_mmd_to_samples(emb: &CMEmbedding, samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    let uniform = alloc::vec![1.0 / samples.len() as f64; samples.len()];
    squared_mmd(
        &emb.kernel().clone(),
        emb.atoms(),
        emb.weights(),
        samples,
        &uniform,
    )
}

fn bilinear(
    kernel: &GaussianDensityKernel,
    pa: &[f64],
    wa: &[f64],
    pb: &[f64],
    wb: &[f64],
) -> f64 {
    let mut total = 0.0;
    for (&x, &wx) in pa.iter().zip(wa) {
        let mut inner = 0.0;
        for (&y, &wy) in pb.iter().zip(wb) {
            inner += wy * kernel.eval_sq_dist((x - y) * (x - y));
        }
        total += wx * inner;
    }
    total
}
