//! The neural conditional mean embedding estimator.
//!
//! A trained model is a weight network `f(.; theta)` over a fixed grid of
//! output locations `eta` plus a bandwidth `sigma`: the embedding of
//! `P(Y | X = x)` is `sum_a f_a(x; theta) k_sigma(., eta_a)`. Training
//! minimizes the RKHS loss
//!
//! `mean_i [ -2 sum_a k_sigma(y_i, eta_a) w_a + sum_{a,b} k_sigma(eta_a, eta_b) w_a w_b ]`
//!
//! (the constant `k(y_i, y_i)` term is omitted). The bandwidth is learned
//! either iteratively through the squared-error loss, whose quadratic term
//! uses the widened kernel `k_{sqrt2 sigma}`, or jointly through the RKHS
//! loss itself; the latter is sound because the widened quadratic form never
//! exceeds the narrow one, so the RKHS loss upper-bounds the SQ loss at
//! every bandwidth.

mod herding;
mod train;

pub use herding::{herd_samples, herd_samples_with_candidates, herding_candidates};
pub use train::{train, EpochRecord, Strategy, TrainOutput, TrainingConfig};

use alloc::format;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use crate::math::FloatExt;
use crate::kernels::GaussianDensityKernel;
use crate::matrix::Mat;
use crate::net::{Gradients, WeightNetwork};
use crate::{Error, Result};

/// Fixed, strictly increasing grid of output locations.
#[derive(Clone, Debug, PartialEq)]
pub struct LocationGrid {
    points: Vec<f64>,
}

impl LocationGrid {
    /// Wraps explicit grid points, which must be strictly increasing.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty location grid".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "location grid points must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        *self.points.last().expect("grid is nonempty")
    }
}

/// `m` equally spaced locations spanning the training outputs' range.
pub fn make_grid(train_outputs: &[f64], m: usize) -> Result<LocationGrid> {
    if train_outputs.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot build a grid from empty outputs".into(),
        ));
    }
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least 2 points, got {m}"
        )));
    }
    let lo = train_outputs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = train_outputs
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "outputs span a degenerate range [{lo}, {hi}]"
        )));
    }
    LocationGrid::new(crate::math::linspace(lo, hi, m))
}

/// Finite representation of one conditional mean embedding:
/// `sum_a weights[a] * k(., atoms[a])`. Weights are unconstrained; they may
/// be negative and need not sum to one.
#[derive(Clone, Debug)]
pub struct CMEmbedding {
    atoms: Vec<f64>,
    kernel: GaussianDensityKernel,
    weights: Vec<f64>,
}

impl CMEmbedding {
    pub fn new(atoms: Vec<f64>, kernel: GaussianDensityKernel, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("empty embedding".into()));
        }
        if kernel.dim() != 1 {
            return Err(Error::Shape("embeddings are over scalar outputs".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("non-finite embedding weights".into()));
        }
        Ok(Self {
            atoms,
            kernel,
            weights,
        })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn kernel(&self) -> &GaussianDensityKernel {
        &self.kernel
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Unnormalized conditional density estimate
    /// `sum_a k(y, eta_a) w_a`; may be negative, by design unclipped.
    pub fn density_at(&self, y: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(&eta, &w)| self.kernel.eval_sq_dist((y - eta) * (y - eta)) * w)
            .sum()
    }
}

/// Trained estimator bundle: network, grid, and bandwidth.
#[derive(Clone, Debug)]
pub struct CmeModel {
    net: WeightNetwork,
    grid: LocationGrid,
    sigma: f64,
}

impl CmeModel {
    pub fn from_parts(net: WeightNetwork, grid: LocationGrid, sigma: f64) -> Result<Self> {
        if net.output_dim() != grid.len() {
            return Err(Error::Shape(format!(
                "network outputs {} weights but the grid has {} points",
                net.output_dim(),
                grid.len()
            )));
        }
        GaussianDensityKernel::new(sigma, 1)?;
        Ok(Self { net, grid, sigma })
    }

    pub fn net(&self) -> &WeightNetwork {
        &self.net
    }

    pub fn grid(&self) -> &LocationGrid {
        &self.grid
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kernel(&self) -> GaussianDensityKernel {
        GaussianDensityKernel::new(self.sigma, 1).expect("sigma validated at construction")
    }

    /// Embeds one input: `weights = f(x; theta)` packaged with grid and kernel.
    pub fn embed(&self, x: &[f64]) -> Result<CMEmbedding> {
        let weights = self.net.forward(x)?;
        CMEmbedding::new(self.grid.points().to_vec(), self.kernel(), weights)
    }

    /// Weight vectors for a batch of inputs, one row per input. Row `i`
    /// equals `embed(x_i).weights` to within strict floating-point identity
    /// of the shared forward pass.
    pub fn weights_batch(&self, xs: &Mat) -> Result<Mat> {
        self.net.forward_batch(xs)
    }
}

/// Scalar loss with gradients for the parameters being optimized.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub value: f64,
    pub theta_grads: Gradients,
    /// Derivative in `sigma` (not `log sigma`); zero unless requested.
    pub sigma_grad: f64,
}

/// Scalar loss with only the bandwidth gradient (network frozen).
#[derive(Clone, Copy, Debug)]
pub struct SigmaLossEval {
    pub value: f64,
    pub sigma_grad: f64,
}

/// RKHS loss of a batch with gradients for `theta` and optionally `sigma`.
///
/// Per sample: `-2 sum_a k_sigma(y_i, eta_a) w_a + w_i' G_sigma w_i`,
/// averaged over the batch; `G_sigma` is the grid Gram matrix.
pub fn rkhs_loss(
    net: &WeightNetwork,
    x: &Mat,
    y: &[f64],
    grid: &LocationGrid,
    sigma: f64,
    with_sigma_grad: bool,
) -> Result<LossEval> {
    let kernel = GaussianDensityKernel::new(sigma, 1)?;
    check_batch(net, x, y, grid)?;
    let trace = net.forward_batch_trace(x)?;
    let weights = trace.output();
    if !weights.iter().all(f64::is_finite) {
        return Err(Error::Numerical("non-finite network output".into()));
    }
    let n = x.rows() as f64;

    let (k_y_eta, dk_y_eta) = kernel_matrix(&kernel, y, grid.points(), with_sigma_grad, 1.0);
    let (gram, dgram) = kernel_matrix(&kernel, grid.points(), grid.points(), with_sigma_grad, 1.0);

    let gw = weights.matmul(&gram);
    let mut value = 0.0;
    for i in 0..x.rows() {
        value += -2.0 * crate::matrix::dot(k_y_eta.row(i), weights.row(i))
            + crate::matrix::dot(weights.row(i), gw.row(i));
    }
    value /= n;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite RKHS loss {value}")));
    }

    // dL/dW = (1/n)(-2 K + 2 W G); G is symmetric.
    let mut upstream = gw;
    upstream.scale_in_place(2.0 / n);
    upstream.add_assign_scaled(&k_y_eta, -2.0 / n);
    let theta_grads = net.backward(&trace, &upstream)?;

    let sigma_grad = if with_sigma_grad {
        sigma_contraction(
            weights,
            &dk_y_eta.expect("requested"),
            &dgram.expect("requested"),
            n,
        )
    } else {
        0.0
    };

    Ok(LossEval {
        value,
        theta_grads,
        sigma_grad,
    })
}

/// Squared-error loss of a batch with the bandwidth gradient; the network is
/// treated as frozen. The cross term matches [`rkhs_loss`] exactly (shared
/// code path); the quadratic term uses the widened kernel `k_{sqrt2 sigma}`.
pub fn sq_loss(
    net: &WeightNetwork,
    x: &Mat,
    y: &[f64],
    grid: &LocationGrid,
    sigma: f64,
) -> Result<SigmaLossEval> {
    let kernel = GaussianDensityKernel::new(sigma, 1)?;
    let wide = kernel.scaled(core::f64::consts::SQRT_2)?;
    check_batch(net, x, y, grid)?;
    let weights = net.forward_batch(x)?;
    if !weights.iter().all(f64::is_finite) {
        return Err(Error::Numerical("non-finite network output".into()));
    }
    let n = x.rows() as f64;

    let (k_y_eta, dk_y_eta) = kernel_matrix(&kernel, y, grid.points(), true, 1.0);
    // The widened Gram's sigma-derivative chains through d(sqrt2 sigma)/d sigma.
    let (gram, dgram) = kernel_matrix(
        &wide,
        grid.points(),
        grid.points(),
        true,
        core::f64::consts::SQRT_2,
    );

    let gw = weights.matmul(&gram);
    let mut value = 0.0;
    for i in 0..x.rows() {
        value += -2.0 * crate::matrix::dot(k_y_eta.row(i), weights.row(i))
            + crate::matrix::dot(weights.row(i), gw.row(i));
    }
    value /= n;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite SQ loss {value}")));
    }

    let sigma_grad = sigma_contraction(
        &weights,
        &dk_y_eta.expect("requested"),
        &dgram.expect("requested"),
        n,
    );
    Ok(SigmaLossEval { value, sigma_grad })
}

/// Kernel matrix between scalar point sets, optionally with its elementwise
/// `sigma`-derivative scaled by `chain` (for widened-kernel reparameterization).
fn kernel_matrix(
    kernel: &GaussianDensityKernel,
    a: &[f64],
    b: &[f64],
    with_grad: bool,
    chain: f64,
) -> (Mat, Option<Mat>) {
    let peak = kernel.peak();
    let inv = 1.0 / (2.0 * kernel.sigma() * kernel.sigma());
    let values = Mat::from_fn(a.len(), b.len(), |i, j| {
        let d = a[i] - b[j];
        peak * (-d * d * inv).exp()
    });
    let grads = with_grad.then(|| {
        Mat::from_fn(a.len(), b.len(), |i, j| {
            let d2 = (a[i] - b[j]) * (a[i] - b[j]);
            values.get(i, j) * kernel.sigma_grad_factor(d2) * chain
        })
    });
    (values, grads)
}

/// `(1/n) [ -2 sum_{i,a} W_ia dK_ia + sum_{a,b} dG_ab (W' W)_ab ]`.
fn sigma_contraction(weights: &Mat, dk: &Mat, dgram: &Mat, n: f64) -> f64 {
    let mut cross = 0.0;
    for (w, k) in weights.iter().zip(dk.iter()) {
        cross += w * k;
    }
    let wtw = weights.matmul_transpose_a(weights);
    let mut quad = 0.0;
    for (s, g) in wtw.iter().zip(dgram.iter()) {
        quad += s * g;
    }
    (-2.0 * cross + quad) / n
}

fn check_batch(net: &WeightNetwork, x: &Mat, y: &[f64], grid: &LocationGrid) -> Result<()> {
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
    if net.output_dim() != grid.len() {
        return Err(Error::Shape(format!(
            "network outputs {} weights but the grid has {} points",
            net.output_dim(),
            grid.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::HeadMode;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn make_grid_examples() {
        let g = make_grid(&[0.0, 1.0], 3).unwrap();
        assert_eq!(g.points(), &[0.0, 0.5, 1.0]);

        let g = make_grid(&[-2.0, 0.0, 2.0], 5).unwrap();
        assert_eq!(g.points(), &[-2.0, -1.0, 0.0, 1.0, 2.0]);

        assert!(make_grid(&[1.0, 1.0], 3).is_err());
        assert!(make_grid(&[], 3).is_err());
        assert!(make_grid(&[0.0, 1.0], 1).is_err());
    }

    #[test]
    fn grid_spacing_is_uniform_on_random_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ys: Vec<f64> = (0..5000).map(|_| rng.random_range(-3.0..7.0)).collect();
        let g = make_grid(&ys, 100).unwrap();
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spacing = (hi - lo) / 99.0;
        assert_eq!(g.min(), lo);
        assert_eq!(g.max(), hi);
        for w in g.points().windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], spacing, epsilon = 1e-12);
        }
    }

    /// Net with a single linear layer and zero weights: output is the bias,
    /// the same weight vector for every input.
    fn constant_net(bias: &[f64]) -> WeightNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net =
            WeightNetwork::new(&[1, bias.len()], HeadMode::Linear, &[], &mut rng).unwrap();
        let mut params = vec![0.0; net.num_params()];
        params[bias.len()..].copy_from_slice(bias);
        net.set_param_vector(&params).unwrap();
        net
    }

    #[test]
    fn rkhs_loss_hand_value() {
        let net = constant_net(&[0.5, 0.5]);
        let grid = LocationGrid::new(vec![0.0, 1.0]).unwrap();
        let x = Mat::row_vector(&[0.3]);
        let eval = rkhs_loss(&net, &x, &[0.0], &grid, 1.0, false).unwrap();
        assert_abs_diff_eq!(eval.value, -0.320455, epsilon = 1e-5);
    }

    #[test]
    fn sq_loss_hand_value_and_upper_bound() {
        let net = constant_net(&[0.5, 0.5]);
        let grid = LocationGrid::new(vec![0.0, 1.0]).unwrap();
        let x = Mat::row_vector(&[0.3]);
        let sq = sq_loss(&net, &x, &[0.0], &grid, 1.0).unwrap();
        assert_abs_diff_eq!(sq.value, -0.390020, epsilon = 1e-5);

        let rkhs = rkhs_loss(&net, &x, &[0.0], &grid, 1.0, false).unwrap();
        assert!(
            sq.value <= rkhs.value + 1e-10,
            "SQ loss {} must not exceed RKHS loss {}",
            sq.value,
            rkhs.value
        );
    }

    #[test]
    fn zero_weights_give_zero_loss() {
        let net = constant_net(&[0.0, 0.0, 0.0]);
        let grid = LocationGrid::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let x = Mat::from_vec(2, 1, vec![0.1, -0.2]);
        let y = [0.3, 0.4];
        assert_eq!(rkhs_loss(&net, &x, &y, &grid, 0.7, true).unwrap().value, 0.0);
        assert_eq!(sq_loss(&net, &x, &y, &grid, 0.7).unwrap().value, 0.0);
    }

    #[test]
    fn sq_never_exceeds_rkhs_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..50 {
            let net = random_net(&mut rng, 3, 8);
            let grid = random_grid(&mut rng, 8);
            let x = Mat::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sigma = rng.random_range(0.2..3.0);
            let r = rkhs_loss(&net, &x, &y, &grid, sigma, false).unwrap().value;
            let s = sq_loss(&net, &x, &y, &grid, sigma).unwrap().value;
            assert!(
                s <= r + 1e-10,
                "trial {trial}: sq {s} exceeds rkhs {r} at sigma {sigma}"
            );
        }
    }

    fn random_net(rng: &mut ChaCha8Rng, d_in: usize, m: usize) -> WeightNetwork {
        let mut net =
            WeightNetwork::new(&[d_in, 6, m], HeadMode::Linear, &[], rng).unwrap();
        let params: Vec<f64> = net
            .param_vector()
            .iter()
            .map(|&p| p + rng.random_range(0.01..0.15))
            .collect();
        net.set_param_vector(&params).unwrap();
        net
    }

    fn random_grid(rng: &mut ChaCha8Rng, m: usize) -> LocationGrid {
        let start = rng.random_range(-2.0..-1.0);
        let step = rng.random_range(0.1..0.5);
        LocationGrid::new((0..m).map(|i| start + step * i as f64).collect()).unwrap()
    }

    #[test]
    fn rkhs_theta_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let net = random_net(&mut rng, 2, 5);
            let grid = random_grid(&mut rng, 5);
            let x = Mat::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let sigma = rng.random_range(0.3..2.0);

            let eval = rkhs_loss(&net, &x, &y, &grid, sigma, false).unwrap();
            let analytic = eval.theta_grads.to_vector();
            let mut probe = net.clone();
            let numeric = crate::numdiff::gradient(
                |p| {
                    probe.set_param_vector(p).unwrap();
                    rkhs_loss(&probe, &x, &y, &grid, sigma, false).unwrap().value
                },
                &net.param_vector(),
                1e-5,
            );
            let err = crate::numdiff::max_relative_error(&analytic, &numeric);
            assert!(err <= 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn sigma_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let net = random_net(&mut rng, 2, 6);
            let grid = random_grid(&mut rng, 6);
            let x = Mat::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            let sigma = rng.random_range(0.3..2.0);

            let analytic = rkhs_loss(&net, &x, &y, &grid, sigma, true).unwrap().sigma_grad;
            let numeric = crate::numdiff::central_difference(
                |s| rkhs_loss(&net, &x, &y, &grid, s, false).unwrap().value,
                sigma,
                1e-5,
            );
            let scale = 1.0_f64.max(analytic.abs()).max(numeric.abs());
            assert!(
                ((analytic - numeric) / scale).abs() <= 1e-4,
                "rkhs sigma grad {analytic} vs {numeric}"
            );

            let analytic = sq_loss(&net, &x, &y, &grid, sigma).unwrap().sigma_grad;
            let numeric = crate::numdiff::central_difference(
                |s| sq_loss(&net, &x, &y, &grid, s).unwrap().value,
                sigma,
                1e-5,
            );
            let scale = 1.0_f64.max(analytic.abs()).max(numeric.abs());
            assert!(
                ((analytic - numeric) / scale).abs() <= 1e-4,
                "sq sigma grad {analytic} vs {numeric}"
            );
        }
    }

    #[test]
    fn embedding_is_definitional_forward_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = random_net(&mut rng, 2, 7);
        let grid = random_grid(&mut rng, 7);
        let model = CmeModel::from_parts(net.clone(), grid, 0.8).unwrap();
        let x = [0.4, -0.9];
        let emb = model.embed(&x).unwrap();
        assert_eq!(emb.weights(), net.forward(&x).unwrap().as_slice());
    }

    #[test]
    fn batched_and_single_embeddings_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = random_net(&mut rng, 2, 7);
        let grid = random_grid(&mut rng, 7);
        let model = CmeModel::from_parts(net, grid, 0.8).unwrap();
        let xs = Mat::from_fn(6, 2, |i, j| ((i * 2 + j) as f64 * 0.63).sin());
        let batch = model.weights_batch(&xs).unwrap();
        for i in 0..6 {
            let emb = model.embed(xs.row(i)).unwrap();
            for (a, b) in emb.weights().iter().zip(batch.row(i)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn density_at_examples() {
        let kernel = GaussianDensityKernel::new(1.0, 1).unwrap();
        let emb = CMEmbedding::new(vec![0.0], kernel.clone(), vec![1.0]).unwrap();
        assert_abs_diff_eq!(emb.density_at(0.0), 0.3989423, epsilon = 1e-6);

        let zero = CMEmbedding::new(vec![0.0, 1.0], kernel, vec![0.0, 0.0]).unwrap();
        for y in [-1.0, 0.0, 0.5, 2.0] {
            assert_eq!(zero.density_at(y), 0.0);
        }
    }

    #[test]
    fn loss_validation_errors() {
        let net = constant_net(&[0.1, 0.2]);
        let grid = LocationGrid::new(vec![0.0, 1.0]).unwrap();
        let x = Mat::row_vector(&[0.0]);
        assert!(rkhs_loss(&net, &x, &[0.0, 1.0], &grid, 1.0, false).is_err());
        assert!(rkhs_loss(&net, &Mat::zeros(0, 1), &[], &grid, 1.0, false).is_err());
        assert!(rkhs_loss(&net, &x, &[0.0], &grid, -1.0, false).is_err());
        let wide_grid = LocationGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert!(rkhs_loss(&net, &x, &[0.0], &wide_grid, 1.0, false).is_err());
        assert!(sq_loss(&net, &x, &[0.0], &wide_grid, 1.0).is_err());
    }

    #[test]
    fn location_grid_rejects_non_increasing_points() {
        assert!(LocationGrid::new(vec![0.0, 0.0, 1.0]).is_err());
        assert!(LocationGrid::new(vec![1.0, 0.5]).is_err());
        assert!(LocationGrid::new(vec![]).is_err());
    }
}
