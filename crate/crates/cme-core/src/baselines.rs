//! Deep-feature and classical conditional mean embedding baselines.
//!
//! The deep-feature model learns features `psi(x) = relu(g(x; theta))` by
//! minimizing the ridge-regression residual trace
//! `tr(K_Y (I - F (F'F + lambda I)^{-1} F'))` over minibatches, where `F`
//! stacks the batch features row-wise. Its conditional embedding weights the
//! training outputs: `beta(x) = F_train (F_train'F_train + lambda I)^{-1} psi(x)`.
//! The classical model replaces learned features with a Gaussian kernel on
//! inputs and solves the n-by-n system `(K_X + lambda I) beta = k_X(x)`;
//! it is the small-scale oracle and is guarded to modest n.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::estimator::{CMEmbedding, EpochRecord};
use crate::kernels::{median_heuristic, GaussianDensityKernel};
use crate::matrix::{cholesky, cholesky_solve, cholesky_solve_mat, Mat};
use crate::net::{adamw_step, AdamWConfig, Gradients, HeadMode, OptimizerState, WeightNetwork};
use crate::{Error, Result};

/// Largest training set the classical Gram inversion accepts.
pub const CLASSICAL_MAX_POINTS: usize = 2000;

/// Output-kernel bandwidth policy for the deep-feature baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DfBandwidth {
    /// Median pairwise distance of the training outputs.
    Median,
    Fixed(f64),
}

#[derive(Clone, Debug)]
pub struct DeepFeatureConfig {
    pub bandwidth: DfBandwidth,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub hidden_sizes: Vec<usize>,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for DeepFeatureConfig {
    fn default() -> Self {
        Self {
            bandwidth: DfBandwidth::Median,
            lambda: 0.1,
            epochs: 1000,
            batch_size: 50,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            hidden_sizes: alloc::vec![50],
            feature_dim: 50,
            seed: 0,
        }
    }
}

impl DeepFeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        if let DfBandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "fixed bandwidth must be positive and finite, got {s}"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight_decay must be nonnegative and finite, got {}",
                self.weight_decay
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ridge-residual trace loss of a minibatch with gradients for the feature
/// network. `kernel` is the 1-D output kernel forming `K_Y`.
pub fn df_loss(
    net: &WeightNetwork,
    x: &Mat,
    y: &[f64],
    lambda: f64,
    kernel: &GaussianDensityKernel,
) -> Result<(f64, Gradients)> {
    if x.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::Shape(format!(
            "batch has {} inputs but {} outputs",
            x.rows(),
            y.len()
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }

    let trace = net.forward_batch_trace(x)?;
    let z = trace.output();
    if !z.iter().all(f64::is_finite) {
        return Err(Error::Numerical("non-finite network output".into()));
    }
    let features = relu(z);
    let k_y = kernel.gram_1d(y, y)?;

    let factor = feature_factor(&features, lambda)?;
    // C = K_Y F A^{-1}.
    let u = k_y.matmul(&features);
    let c = cholesky_solve_mat(&factor, &u.transpose()).transpose();

    let mut loss = 0.0;
    for i in 0..k_y.rows() {
        loss += k_y.get(i, i);
    }
    for (cv, fv) in c.iter().zip(features.iter()) {
        loss -= cv * fv;
    }
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite DF loss {loss}")));
    }

    // dL/dF = -2 C + 2 F A^{-1} (F' C).
    let s = features.matmul_transpose_a(&c);
    let r = cholesky_solve_mat(&factor, &s);
    let mut grad_f = features.matmul(&r);
    grad_f.scale_in_place(2.0);
    grad_f.add_assign_scaled(&c, -2.0);

    // Chain through the feature ReLU.
    let mut upstream = grad_f;
    for (g, pre) in upstream.iter_mut().zip(z.iter()) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    let grads = net.backward(&trace, &upstream)?;
    Ok((loss, grads))
}

/// Deep-feature conditional mean embedding with frozen features.
#[derive(Clone, Debug)]
pub struct DeepFeatureModel {
    net: WeightNetwork,
    lambda: f64,
    kernel: GaussianDensityKernel,
    train_features: Mat,
    train_outputs: Vec<f64>,
    factor: Mat,
}

impl DeepFeatureModel {
    /// Freezes a feature network against a training set: caches the feature
    /// matrix and the Cholesky factor of `F'F + lambda I`.
    pub fn from_parts(
        net: WeightNetwork,
        lambda: f64,
        kernel: GaussianDensityKernel,
        train_x: &Mat,
        train_y: &[f64],
    ) -> Result<Self> {
        if train_x.rows() != train_y.len() || train_x.rows() == 0 {
            return Err(Error::Shape(format!(
                "{} training inputs but {} outputs",
                train_x.rows(),
                train_y.len()
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        if kernel.dim() != 1 {
            return Err(Error::Shape("output kernel must be 1-dimensional".into()));
        }
        let train_features = relu(&net.forward_batch(train_x)?);
        let factor = feature_factor(&train_features, lambda)?;
        Ok(Self {
            net,
            lambda,
            kernel,
            train_features,
            train_outputs: train_y.to_vec(),
            factor,
        })
    }

    pub fn net(&self) -> &WeightNetwork {
        &self.net
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> &GaussianDensityKernel {
        &self.kernel
    }

    pub fn train_outputs(&self) -> &[f64] {
        &self.train_outputs
    }

    /// `beta(x)`: one weight per training point.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        let psi = relu_vec(self.net.forward(x)?);
        let z = cholesky_solve(&self.factor, &psi);
        Ok(self.train_features.matvec(&z))
    }

    /// Embedding over the training outputs: `sum_i beta_i(x) k(., y_i)`.
    pub fn embed(&self, x: &[f64]) -> Result<CMEmbedding> {
        let weights = self.weights(x)?;
        CMEmbedding::new(self.train_outputs.clone(), self.kernel.clone(), weights)
    }
}

#[derive(Clone, Debug)]
pub struct DeepFeatureTrainOutput {
    pub model: DeepFeatureModel,
    pub history: Vec<EpochRecord>,
}

/// Trains the feature network on a standardized dataset and freezes it.
pub fn train_deep_feature(
    dataset: &LabeledDataset,
    config: &DeepFeatureConfig,
) -> Result<DeepFeatureTrainOutput> {
    config.validate()?;
    if !dataset.is_standardized() {
        return Err(Error::Usage(
            "train_deep_feature expects a standardized dataset; call LabeledDataset::standardized first"
                .into(),
        ));
    }
    let sigma = match config.bandwidth {
        DfBandwidth::Median => {
            let y_col = Mat::from_vec(dataset.len(), 1, dataset.outputs().to_vec());
            median_heuristic(&y_col)?
        }
        DfBandwidth::Fixed(s) => s,
    };
    let kernel = GaussianDensityKernel::new(sigma, 1)?;

    let mut sizes = Vec::with_capacity(config.hidden_sizes.len() + 2);
    sizes.push(dataset.input_dim());
    sizes.extend_from_slice(&config.hidden_sizes);
    sizes.push(config.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = WeightNetwork::new(&sizes, HeadMode::Linear, &[], &mut rng)?;

    let opt_cfg = AdamWConfig::default()
        .with_learning_rate(config.learning_rate)
        .with_weight_decay(config.weight_decay);
    let mut opt = OptimizerState::new(&net, opt_cfg)?;

    let mut history = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut global_step = 0usize;

    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in indices.chunks(config.batch_size) {
            let (xb, yb) = gather(dataset, chunk);
            let (loss, grads) = df_loss(&net, &xb, &yb, config.lambda, &kernel)
                .map_err(|e| diverged(epoch, global_step, e))?;
            adamw_step(&mut net, &grads, &mut opt)
                .map_err(|e| diverged(epoch, global_step, e))?;
            loss_sum += loss;
            global_step += 1;
            batches += 1;
        }
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / batches.max(1) as f64,
            sigma,
        });
    }

    let model = DeepFeatureModel::from_parts(
        net,
        config.lambda,
        kernel,
        dataset.inputs(),
        dataset.outputs(),
    )?;
    Ok(DeepFeatureTrainOutput { model, history })
}

/// Classical kernel-ridge conditional mean embedding over raw inputs.
#[derive(Clone, Debug)]
pub struct ClassicalCMEModel {
    input_kernel: GaussianDensityKernel,
    lambda: f64,
    train_inputs: Mat,
    train_outputs: Vec<f64>,
    factor: Mat,
}

impl ClassicalCMEModel {
    /// Fits by factoring `K_X + lambda I`; the input bandwidth is the median
    /// pairwise distance of the training inputs.
    pub fn fit(dataset: &LabeledDataset, lambda: f64) -> Result<Self> {
        if dataset.len() > CLASSICAL_MAX_POINTS {
            return Err(Error::Usage(format!(
                "classical CME is the small-scale oracle: {} points exceeds the {CLASSICAL_MAX_POINTS}-point guard",
                dataset.len()
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        let sigma = median_heuristic(dataset.inputs())?;
        let input_kernel = GaussianDensityKernel::new(sigma, dataset.input_dim())?;
        let mut gram = input_kernel.gram(dataset.inputs(), dataset.inputs())?;
        for i in 0..gram.rows() {
            *gram.row_mut(i).get_mut(i).expect("square") += lambda;
        }
        let factor = cholesky(&gram).map_err(|_| {
            Error::Numerical(
                "input Gram factorization failed; increase lambda".into(),
            )
        })?;
        Ok(Self {
            input_kernel,
            lambda,
            train_inputs: dataset.inputs().clone(),
            train_outputs: dataset.outputs().to_vec(),
            factor,
        })
    }

    pub fn input_kernel(&self) -> &GaussianDensityKernel {
        &self.input_kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn train_inputs(&self) -> &Mat {
        &self.train_inputs
    }

    pub fn train_outputs(&self) -> &[f64] {
        &self.train_outputs
    }

    /// `beta(x) = (K_X + lambda I)^{-1} k_X(x)`.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut k_vec = Vec::with_capacity(self.train_inputs.rows());
        for i in 0..self.train_inputs.rows() {
            k_vec.push(self.input_kernel.eval(self.train_inputs.row(i), x)?);
        }
        Ok(cholesky_solve(&self.factor, &k_vec))
    }

    /// Embedding over training outputs under a caller-chosen output kernel.
    pub fn embed(&self, x: &[f64], output_kernel: &GaussianDensityKernel) -> Result<CMEmbedding> {
        let weights = self.weights(x)?;
        CMEmbedding::new(self.train_outputs.clone(), output_kernel.clone(), weights)
    }
}

fn relu(z: &Mat) -> Mat {
    let mut out = z.clone();
    for v in out.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

fn relu_vec(mut z: Vec<f64>) -> Vec<f64> {
    for v in &mut z {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    z
}

/// Cholesky factor of `F'F + lambda I`.
fn feature_factor(features: &Mat, lambda: f64) -> Result<Mat> {
    let mut a = features.matmul_transpose_a(features);
    for i in 0..a.cols() {
        let v = a.get(i, i) + lambda;
        a.row_mut(i)[i] = v;
    }
    cholesky(&a).map_err(|_| {
        Error::Numerical("feature Gram factorization failed; increase lambda".into())
    })
}

fn gather(dataset: &LabeledDataset, indices: &[usize]) -> (Mat, Vec<f64>) {
    let d = dataset.input_dim();
    let mut x = Mat::zeros(indices.len(), d);
    let mut y = Vec::with_capacity(indices.len());
    for (r, &i) in indices.iter().enumerate() {
        x.row_mut(r).copy_from_slice(dataset.inputs().row(i));
        y.push(dataset.outputs()[i]);
    }
    (x, y)
}

fn diverged(epoch: usize, step: usize, err: Error) -> Error {
    Error::Numerical(format!(
        "training diverged at epoch {epoch}, step {step}: {err}"
    ))
}
