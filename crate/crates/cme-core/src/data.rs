//! Synthetic conditional-density datasets, splits, and standardization.
//!
//! Three scalar-input families exercise qualitatively different conditionals:
//! `Bimodal` (two Gaussian branches whose separation and noise grow with x),
//! `Skewed` (skew-normal with x-dependent location, scale, and shape), and
//! `Ring` (a circle arc with an embedded uniform box near the center).
//! Generation is a pure function of `(spec, seed)`.

use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[cfg(not(feature = "std"))]
use crate::math::FloatExt;
use crate::matrix::Mat;
use crate::{Error, Result};

/// Toy conditional-density family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyFamily {
    Bimodal,
    Skewed,
    Ring,
}

impl ToyFamily {
    pub const ALL: [ToyFamily; 3] = [ToyFamily::Bimodal, ToyFamily::Skewed, ToyFamily::Ring];

    pub fn name(self) -> &'static str {
        match self {
            ToyFamily::Bimodal => "bimodal",
            ToyFamily::Skewed => "skewed",
            ToyFamily::Ring => "ring",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "bimodal" => Ok(ToyFamily::Bimodal),
            "skewed" => Ok(ToyFamily::Skewed),
            "ring" => Ok(ToyFamily::Ring),
            other => Err(Error::InvalidArgument(format!(
                "unknown toy family {other:?}; valid families: bimodal, skewed, ring"
            ))),
        }
    }

    /// Support of the input marginal.
    pub fn input_range(self) -> (f64, f64) {
        match self {
            ToyFamily::Bimodal | ToyFamily::Skewed => (-5.0, 5.0),
            ToyFamily::Ring => (-2.0, 2.0),
        }
    }
}

/// Specification of a toy dataset draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToySpec {
    pub family: ToyFamily,
    pub n: usize,
    pub seed: u64,
}

/// Per-column affine transform fitted on training data (population std).
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    x_mean: Vec<f64>,
    x_std: Vec<f64>,
    y_mean: f64,
    y_std: f64,
}

impl Standardizer {
    /// Fits means and standard deviations on `data`; errors on any constant
    /// column since a zero-variance column cannot be standardized.
    pub fn fit(data: &LabeledDataset) -> Result<Self> {
        let n = data.len() as f64;
        let d = data.input_dim();
        let mut x_mean = alloc::vec![0.0; d];
        let mut x_std = alloc::vec![0.0; d];
        for i in 0..data.len() {
            for (m, &v) in x_mean.iter_mut().zip(data.inputs.row(i)) {
                *m += v;
            }
        }
        for m in &mut x_mean {
            *m /= n;
        }
        for i in 0..data.len() {
            for ((s, &v), &m) in x_std.iter_mut().zip(data.inputs.row(i)).zip(&x_mean) {
                *s += (v - m) * (v - m);
            }
        }
        for (j, s) in x_std.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            if *s <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "input column {j} is constant; cannot standardize"
                )));
            }
        }
        let y_mean = crate::math::mean(&data.outputs);
        let y_var =
            data.outputs.iter().map(|&y| (y - y_mean) * (y - y_mean)).sum::<f64>() / n;
        let y_std = y_var.sqrt();
        if y_std <= 0.0 {
            return Err(Error::InvalidArgument(
                "output column is constant; cannot standardize".into(),
            ));
        }
        Ok(Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        })
    }

    pub fn from_parts(x_mean: Vec<f64>, x_std: Vec<f64>, y_mean: f64, y_std: f64) -> Result<Self> {
        if x_mean.len() != x_std.len() {
            return Err(Error::Shape(
                "standardizer mean/std lengths differ".into(),
            ));
        }
        if x_std.iter().any(|&s| !(s > 0.0)) || !(y_std > 0.0) {
            return Err(Error::InvalidArgument(
                "standardizer stds must be positive".into(),
            ));
        }
        Ok(Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        })
    }

    pub fn x_mean(&self) -> &[f64] {
        &self.x_mean
    }

    pub fn x_std(&self) -> &[f64] {
        &self.x_std
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn y_std(&self) -> f64 {
        self.y_std
    }

    pub fn standardize_x(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.x_mean.iter().zip(&self.x_std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn standardize_y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    pub fn destandardize_y(&self, y: f64) -> f64 {
        y * self.y_std + self.y_mean
    }

    pub fn destandardize_y_slice(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.destandardize_y(y)).collect()
    }

    /// Returns a standardized copy of `data` carrying this standardizer.
    /// Test data must be transformed with the training standardizer, never
    /// with statistics of its own.
    pub fn transform(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        if data.input_dim() != self.x_mean.len() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} input columns, data has {}",
                self.x_mean.len(),
                data.input_dim()
            )));
        }
        let inputs = Mat::from_fn(data.len(), data.input_dim(), |i, j| {
            (data.inputs.get(i, j) - self.x_mean[j]) / self.x_std[j]
        });
        let outputs = data.outputs.iter().map(|&y| self.standardize_y(y)).collect();
        Ok(LabeledDataset {
            inputs,
            outputs,
            standardizer: Some(self.clone()),
        })
    }
}

/// Paired inputs and scalar outputs, optionally carrying the standardizer
/// that produced them.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    inputs: Mat,
    outputs: Vec<f64>,
    standardizer: Option<Standardizer>,
}

impl LabeledDataset {
    pub fn new(inputs: Mat, outputs: Vec<f64>) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        if inputs.rows() != outputs.len() {
            return Err(Error::Shape(format!(
                "{} input rows but {} outputs",
                inputs.rows(),
                outputs.len()
            )));
        }
        Ok(Self {
            inputs,
            outputs,
            standardizer: None,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn inputs(&self) -> &Mat {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn is_standardized(&self) -> bool {
        self.standardizer.is_some()
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    /// Fits a standardizer on `self` and returns the transformed copy.
    pub fn standardized(&self) -> Result<(LabeledDataset, Standardizer)> {
        let stdz = Standardizer::fit(self)?;
        Ok((stdz.transform(self)?, stdz))
    }

    /// Seed-deterministic shuffle split into disjoint, exhaustive
    /// (train, test) parts.
    pub fn split(&self, test_fraction: f64, fold_seed: u64) -> Result<(Self, Self)> {
        if self.len() < 10 {
            return Err(Error::InvalidArgument(format!(
                "split needs at least 10 points, got {}",
                self.len()
            )));
        }
        if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "test fraction must lie in (0, 1), got {test_fraction}"
            )));
        }
        let n = self.len();
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(fold_seed);
        indices.shuffle(&mut rng);
        let (test_idx, train_idx) = indices.split_at(n_test);
        Ok((self.subset(train_idx), self.subset(test_idx)))
    }

    fn subset(&self, indices: &[usize]) -> Self {
        let inputs = Mat::from_fn(indices.len(), self.input_dim(), |i, j| {
            self.inputs.get(indices[i], j)
        });
        let outputs = indices.iter().map(|&i| self.outputs[i]).collect();
        Self {
            inputs,
            outputs,
            standardizer: self.standardizer.clone(),
        }
    }
}

/// Draws a toy dataset; pure function of the spec.
pub fn generate_toy(spec: &ToySpec) -> Result<LabeledDataset> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("toy dataset needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.family.input_range();
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x = rng.random_range(lo..hi);
        xs.push(x);
        ys.push(draw_conditional(spec.family, x, &mut rng));
    }
    LabeledDataset::new(Mat::from_vec(spec.n, 1, xs), ys)
}

/// `m` draws from the true conditional `P(Y | X = x)`.
pub fn sample_conditional_truth(family: ToyFamily, x: f64, m: usize, seed: u64) -> Result<Vec<f64>> {
    let (lo, hi) = family.input_range();
    if !(lo..=hi).contains(&x) {
        return Err(Error::InvalidArgument(format!(
            "x = {x} outside the {} input range [{lo}, {hi}]",
            family.name()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m).map(|_| draw_conditional(family, x, &mut rng)).collect())
}

fn draw_conditional<R: Rng + ?Sized>(family: ToyFamily, x: f64, rng: &mut R) -> f64 {
    match family {
        ToyFamily::Bimodal => {
            let p = sigmoid(1.5 * x);
            let branch = if rng.random_bool(p) { 1.0 } else { 0.0 };
            // N(0, (0.05x)^2) pins the variance; the std is |0.05x|.
            let noise_std = (0.05 * x).abs();
            let eps: f64 = StandardNormal.sample(rng);
            0.2 * x + branch + noise_std * eps
        }
        ToyFamily::Skewed => {
            let xi = 0.1 * x;
            let omega = 0.1 * x.abs() + 0.05;
            let alpha = -8.0 + 8.0 * sigmoid(x);
            xi + omega * skew_normal_standard(alpha, rng)
        }
        ToyFamily::Ring => {
            if x.abs() <= 1.0 && rng.random_bool(0.5) {
                rng.random_range(-1.0..1.0)
            } else {
                let theta = (x / 2.0).acos();
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let eps: f64 = StandardNormal.sample(rng);
                2.0 * (sign * theta).sin() + 0.1 * eps
            }
        }
    }
}

/// Standard skew-normal draw via the two-normal construction:
/// `z = delta |u0| + sqrt(1 - delta^2) u1` with `delta = alpha / sqrt(1 + alpha^2)`.
fn skew_normal_standard<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let delta = alpha / (1.0 + alpha * alpha).sqrt();
    let u0: f64 = StandardNormal.sample(rng);
    let u1: f64 = StandardNormal.sample(rng);
    delta * u0.abs() + (1.0 - delta * delta).sqrt() * u1
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}
