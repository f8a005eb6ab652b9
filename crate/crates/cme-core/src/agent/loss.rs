//! Bellman losses: squared-MMD (single kernel and FUSE-fused) and the
//! expectation-only TD baseline.
//!
//! Per transition under kernel k, with target atoms `τ_a = r + γ η_a` and
//! target weights v (from the frozen network at its own greedy next action):
//!
//! `d̂² = Σ_{a,b} k(τ_a, τ_b) v_a v_b − 2 Σ_{a,b} k(τ_a, η_b) v_a w_b
//!        + Σ_{a,b} k(η_a, η_b) w_a w_b`
//!
//! Only the w branch (current network) carries gradients. Terminal
//! transitions collapse the target onto the atom nearest r and drop the
//! γ scaling, so every Gram in their d̂² is the atom Gram.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use crate::kernels::GaussianDensityKernel;
use crate::math::{log_mean_exp, softmax};
use crate::matrix::{dot, Mat};
use crate::net::{ForwardTrace, Gradients};
use crate::{Error, Result};

use super::{argmax_lowest, DqnModel, Transition, ZDistributionModel};

/// Distinct rewards whose cross Grams stay cached.
const CROSS_CACHE_CAP: usize = 64;

/// Per-kernel Gram cache. The atom Gram and the target-atom Gram never depend
/// on the reward (pairwise τ differences are γ(η_a − η_b)), so both are built
/// once; the cross Gram K_τη does depend on r and is cached per distinct
/// reward with FIFO eviction.
#[derive(Clone, Debug)]
pub struct BellmanKernelCache {
    kernel: GaussianDensityKernel,
    atoms: Vec<f64>,
    gamma: f64,
    k_eta_eta: Mat,
    k_tau_tau: Mat,
    cross: VecDeque<(u64, Mat)>,
}

impl BellmanKernelCache {
    pub fn new(kernel: GaussianDensityKernel, atoms: &[f64], gamma: f64) -> Result<Self> {
        if kernel.dim() != 1 {
            return Err(Error::InvalidArgument(format!(
                "return distributions are scalar; kernel dim must be 1, got {}",
                kernel.dim()
            )));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("empty atom grid".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0, 1], got {gamma}"
            )));
        }
        let m = atoms.len();
        let mut k_eta_eta = Mat::zeros(m, m);
        let mut k_tau_tau = Mat::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                let d = atoms[a] - atoms[b];
                k_eta_eta.set(a, b, kernel.eval_sq_dist(d * d));
                let dt = gamma * d;
                k_tau_tau.set(a, b, kernel.eval_sq_dist(dt * dt));
            }
        }
        Ok(Self {
            kernel,
            atoms: atoms.to_vec(),
            gamma,
            k_eta_eta,
            k_tau_tau,
            cross: VecDeque::new(),
        })
    }

    pub fn kernel(&self) -> &GaussianDensityKernel {
        &self.kernel
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn cross_gram(&mut self, r: f64) -> &Mat {
        let key = r.to_bits();
        if let Some(pos) = self.cross.iter().position(|(k, _)| *k == key) {
            return &self.cross[pos].1;
        }
        let m = self.atoms.len();
        let mut g = Mat::zeros(m, m);
        for a in 0..m {
            let tau = r + self.gamma * self.atoms[a];
            for b in 0..m {
                let d = tau - self.atoms[b];
                g.set(a, b, self.kernel.eval_sq_dist(d * d));
            }
        }
        if self.cross.len() == CROSS_CACHE_CAP {
            self.cross.pop_front();
        }
        self.cross.push_back((key, g));
        &self.cross.back().expect("just pushed").1
    }

    #[cfg(test)]
    fn cached_rewards(&self) -> usize {
        self.cross.len()
    }
}

/// Forward pass plus the per-transition pieces every kernel shares: the
/// chosen-action weight block w and the target weight vector v (one-hot on
/// terminal rows).
struct PreparedBatch {
    trace: ForwardTrace,
    chosen: Mat,
    v: Mat,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    terminals: Vec<bool>,
    hot: Vec<usize>,
}

fn check_transitions(batch: &[Transition], input_dim: usize, num_actions: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty transition batch".into()));
    }
    for (i, t) in batch.iter().enumerate() {
        if t.state.len() != input_dim || t.next_state.len() != input_dim {
            return Err(Error::Usage(format!(
                "transition {i}: state dims ({}, {}) do not match the network input dim {input_dim}",
                t.state.len(),
                t.next_state.len()
            )));
        }
        if t.action >= num_actions {
            return Err(Error::Usage(format!(
                "transition {i}: action {} out of range for {num_actions} actions",
                t.action
            )));
        }
        if !t.reward.is_finite() {
            return Err(Error::Usage(format!(
                "transition {i}: reward {} is not finite",
                t.reward
            )));
        }
    }
    Ok(())
}

fn nearest_atom(atoms: &[f64], r: f64) -> usize {
    let mut best = 0;
    let mut best_d = (r - atoms[0]).abs();
    for (j, &eta) in atoms.iter().enumerate().skip(1) {
        let d = (r - eta).abs();
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn prepare(
    model: &ZDistributionModel,
    target: &ZDistributionModel,
    batch: &[Transition],
) -> Result<PreparedBatch> {
    if model.atoms() != target.atoms() || model.num_actions() != target.num_actions() {
        return Err(Error::Usage(
            "model and target must share the atom grid and action count".into(),
        ));
    }
    let d = model.net().input_dim();
    check_transitions(batch, d, model.num_actions())?;
    let b = batch.len();
    let mut states = Mat::zeros(b, d);
    let mut next = Mat::zeros(b, d);
    for (i, t) in batch.iter().enumerate() {
        states.row_mut(i).copy_from_slice(&t.state);
        next.row_mut(i).copy_from_slice(&t.next_state);
    }
    let trace = model.net().forward_batch_trace(&states)?;
    let target_out = target.net().forward_batch(&next)?;

    let m = model.num_atoms();
    let mut chosen = Mat::zeros(b, m);
    let mut v = Mat::zeros(b, m);
    let mut hot = alloc::vec![0usize; b];
    for (i, t) in batch.iter().enumerate() {
        chosen
            .row_mut(i)
            .copy_from_slice(model.action_block(trace.output().row(i), t.action));
        if t.terminal {
            let j = nearest_atom(model.atoms(), t.reward);
            hot[i] = j;
            v.row_mut(i)[j] = 1.0;
        } else {
            let row = target_out.row(i);
            let a_star = argmax_lowest(&target.q_values_from_row(row));
            v.row_mut(i).copy_from_slice(target.action_block(row, a_star));
        }
    }
    Ok(PreparedBatch {
        trace,
        chosen,
        v,
        actions: batch.iter().map(|t| t.action).collect(),
        rewards: batch.iter().map(|t| t.reward).collect(),
        terminals: batch.iter().map(|t| t.terminal).collect(),
        hot,
    })
}

/// Batch-mean d̂² under one kernel plus the upstream cotangent on the network
/// output (nonzero only in each row's chosen-action block).
fn kernel_terms(
    prep: &PreparedBatch,
    model: &ZDistributionModel,
    cache: &mut BellmanKernelCache,
) -> Result<(f64, Mat)> {
    if cache.atoms.as_slice() != model.atoms() {
        return Err(Error::Usage(
            "kernel cache atoms differ from the model grid".into(),
        ));
    }
    let b = prep.chosen.rows();
    let m = model.num_atoms();
    let wk = prep.chosen.matmul(&cache.k_eta_eta);
    let mut upstream = Mat::zeros(b, model.num_actions() * m);
    let peak = cache.kernel.peak();
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    for i in 0..b {
        let w = prep.chosen.row(i);
        // quad = vᵀ K v on the target branch; c = (cross Gram)ᵀ v
        let (quad, c) = if prep.terminals[i] {
            (peak, cache.k_eta_eta.row(prep.hot[i]).to_vec())
        } else {
            let vk = cache.k_tau_tau.matvec(prep.v.row(i));
            let quad = dot(prep.v.row(i), &vk);
            let c = cache.cross_gram(prep.rewards[i]).matvec_transpose(prep.v.row(i));
            (quad, c)
        };
        let wk_i = wk.row(i);
        loss += inv_b * (quad - 2.0 * dot(&c, w) + dot(wk_i, w));
        let start = prep.actions[i] * m;
        let block = &mut upstream.row_mut(i)[start..start + m];
        for j in 0..m {
            block[j] = 2.0 * inv_b * (wk_i[j] - c[j]);
        }
    }
    Ok((loss, upstream))
}

/// Batch-mean squared MMD between current and Bellman-target embeddings under
/// one kernel. Gradients flow only through the current network.
pub fn mmd2_bellman_loss(
    model: &ZDistributionModel,
    target: &ZDistributionModel,
    batch: &[Transition],
    cache: &mut BellmanKernelCache,
) -> Result<(f64, Gradients)> {
    let prep = prepare(model, target, batch)?;
    let (loss, upstream) = kernel_terms(&prep, model, cache)?;
    let grads = model.net().backward(&prep.trace, &upstream)?;
    Ok((loss, grads))
}

/// Log-mean-exp of the per-kernel batch-mean d̂² across the family. The
/// gradient is the softmax(d̂²)-weighted mix of per-kernel gradients, taken
/// through a single backward pass on the mixed cotangent.
pub fn fuse_loss(
    model: &ZDistributionModel,
    target: &ZDistributionModel,
    batch: &[Transition],
    caches: &mut [BellmanKernelCache],
) -> Result<(f64, Gradients)> {
    if caches.is_empty() {
        return Err(Error::InvalidArgument("fuse needs a nonempty kernel family".into()));
    }
    let gamma = caches[0].gamma;
    if caches.iter().any(|c| c.gamma != gamma) {
        return Err(Error::Usage("kernel caches disagree on gamma".into()));
    }
    let prep = prepare(model, target, batch)?;
    let mut losses = Vec::with_capacity(caches.len());
    let mut upstreams = Vec::with_capacity(caches.len());
    for cache in caches.iter_mut() {
        let (l, u) = kernel_terms(&prep, model, cache)?;
        losses.push(l);
        upstreams.push(u);
    }
    let fused = log_mean_exp(&losses);
    let mix = softmax(&losses);
    let mut fused_up = Mat::zeros(prep.chosen.rows(), model.num_actions() * model.num_atoms());
    for (u, &s) in upstreams.iter().zip(&mix) {
        fused_up.add_assign_scaled(u, s);
    }
    let grads = model.net().backward(&prep.trace, &fused_up)?;
    Ok((fused, grads))
}

/// Mean squared TD error with a frozen target branch; terminal targets are
/// the bare reward.
pub fn dqn_loss(
    model: &DqnModel,
    target: &DqnModel,
    batch: &[Transition],
    gamma: f64,
) -> Result<(f64, Gradients)> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    if model.num_actions() != target.num_actions() {
        return Err(Error::Usage("model and target action counts differ".into()));
    }
    let d = model.net().input_dim();
    check_transitions(batch, d, model.num_actions())?;
    let b = batch.len();
    let mut states = Mat::zeros(b, d);
    let mut next = Mat::zeros(b, d);
    for (i, t) in batch.iter().enumerate() {
        states.row_mut(i).copy_from_slice(&t.state);
        next.row_mut(i).copy_from_slice(&t.next_state);
    }
    let trace = model.net().forward_batch_trace(&states)?;
    let target_q = target.net().forward_batch(&next)?;
    let mut upstream = Mat::zeros(b, model.num_actions());
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let q = trace.output().row(i)[t.action];
        let tgt = if t.terminal {
            t.reward
        } else {
            let best = target_q
                .row(i)
                .iter()
                .fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            t.reward + gamma * best
        };
        let diff = q - tgt;
        loss += inv_b * diff * diff;
        upstream.row_mut(i)[t.action] = 2.0 * inv_b * diff;
    }
    let grads = model.net().backward(&trace, &upstream)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use crate::math::linspace;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model_with(
        obs_dim: usize,
        num_actions: usize,
        atoms: Vec<f64>,
        seed: u64,
    ) -> ZDistributionModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let family = KernelFamily::new(&[1.0], 1).unwrap();
        ZDistributionModel::new(obs_dim, num_actions, &[6], atoms, family, &mut rng).unwrap()
    }

    /// Shifts every parameter off zero so no batch row sits exactly on a ReLU
    /// kink during finite differencing.
    fn jitter(params: &mut [f64], seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in params.iter_mut() {
            *p += rng.random_range(0.01..0.15);
        }
    }

    fn jittered(mut model: ZDistributionModel, seed: u64) -> ZDistributionModel {
        let mut params = model.net().param_vector();
        jitter(&mut params, seed);
        model.net_mut().set_param_vector(&params).unwrap();
        model
    }

    fn random_batch(
        rng: &mut ChaCha8Rng,
        obs_dim: usize,
        num_actions: usize,
        len: usize,
        with_terminals: bool,
    ) -> Vec<Transition> {
        (0..len)
            .map(|i| Transition {
                state: (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: rng.random_range(0..num_actions),
                reward: rng.random_range(-2.0..2.0),
                next_state: (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                terminal: with_terminals && i % 3 == 0,
            })
            .collect()
    }

    fn flatten(grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in grads.layers() {
            out.extend_from_slice(layer.weight.data());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Central-difference check of `analytic` against `loss_of` over every
    /// parameter, relative tolerance 1e-4.
    fn assert_fd_matches(
        params: &[f64],
        analytic: &Gradients,
        mut loss_of: impl FnMut(&[f64]) -> f64,
    ) {
        let flat = flatten(analytic);
        assert_eq!(flat.len(), params.len());
        let h = 1e-5;
        for i in 0..params.len() {
            let mut plus = params.to_vec();
            plus[i] += h;
            let mut minus = params.to_vec();
            minus[i] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let scale = fd.abs().max(flat[i].abs()).max(1e-6);
            assert!(
                (fd - flat[i]).abs() / scale <= 1e-4,
                "param {i}: analytic {} vs finite difference {fd}",
                flat[i]
            );
        }
    }

    fn cache_for(model: &ZDistributionModel, sigma: f64, gamma: f64) -> BellmanKernelCache {
        let kernel = GaussianDensityKernel::new(sigma, 1).unwrap();
        BellmanKernelCache::new(kernel, model.atoms(), gamma).unwrap()
    }

    #[test]
    fn single_atom_hand_value() {
        // M = 1, η = {0}: the softmax over a single logit pins w = v = 1.
        // d̂² = k(0) − 2 k(1) + k(0) with k the unit Gaussian density.
        let model = model_with(1, 1, vec![0.0], 0);
        let target = model.clone();
        let mut cache = cache_for(&model, 1.0, 0.99);
        let batch = [Transition {
            state: vec![0.3],
            action: 0,
            reward: 1.0,
            next_state: vec![-0.7],
            terminal: false,
        }];
        let (loss, _) = mmd2_bellman_loss(&model, &target, &batch, &mut cache).unwrap();
        let peak = 0.3989422804014327;
        let k1 = 0.24197072451914337;
        assert_abs_diff_eq!(loss, 2.0 * (peak - k1), epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 0.3139431, epsilon = 1e-6);
    }

    #[test]
    fn identical_embeddings_give_zero_loss() {
        // r = 0 and γ = 1 make τ = η; with target = model and next = state,
        // v = w and all three quadratic forms cancel.
        let atoms = linspace(-2.0, 2.0, 9);
        let model = jittered(model_with(2, 2, atoms, 1), 11);
        let target = model.clone();
        let mut cache = cache_for(&model, 0.8, 1.0);
        let state = vec![0.4, -0.2];
        // v = w needs the stored action to be the target's greedy choice.
        let action = model.greedy_action(&state).unwrap();
        let batch = [Transition {
            state: state.clone(),
            action,
            reward: 0.0,
            next_state: state,
            terminal: false,
        }];
        let (loss, grads) = mmd2_bellman_loss(&model, &target, &batch, &mut cache).unwrap();
        assert_abs_diff_eq!(loss, 0.0, epsilon = 1e-12);
        // The gradient −2c + 2 K_ηη w also cancels up to rounding.
        let max_grad = flatten(&grads).iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        assert!(max_grad <= 1e-9, "gradient magnitude {max_grad}");
    }

    #[test]
    fn squared_mmd_is_never_below_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..30 {
            let atoms = linspace(-3.0, 3.0, 7);
            let model = jittered(model_with(3, 2, atoms.clone(), trial), trial + 40);
            let target = jittered(model_with(3, 2, atoms, trial + 100), trial + 90);
            let mut cache = cache_for(&model, rng.random_range(0.3..3.0), 0.95);
            let batch = random_batch(&mut rng, 3, 2, 5, true);
            let (loss, _) = mmd2_bellman_loss(&model, &target, &batch, &mut cache).unwrap();
            assert!(loss >= -1e-10, "trial {trial}: loss {loss}");
        }
    }

    #[test]
    fn terminal_rows_use_the_atom_nearest_the_reward() {
        // One terminal transition, reward nearest atom +1: d̂² reduces to
        // peak − 2 Σ_b k(1, η_b) w_b + wᵀ K_ηη w, computable by hand from the
        // forward weights.
        let atoms = vec![-1.0, 0.0, 1.0, 2.0];
        let model = jittered(model_with(2, 2, atoms.clone(), 3), 17);
        let target = jittered(model_with(2, 2, atoms.clone(), 4), 18);
        let sigma = 0.9;
        let mut cache = cache_for(&model, sigma, 0.99);
        let batch = [Transition {
            state: vec![0.2, 0.8],
            action: 0,
            reward: 1.2,
            next_state: vec![-0.5, 0.1],
            terminal: true,
        }];
        let (loss, _) = mmd2_bellman_loss(&model, &target, &batch, &mut cache).unwrap();

        let kernel = GaussianDensityKernel::new(sigma, 1).unwrap();
        let row = model.net().forward(&batch[0].state).unwrap();
        let w = model.action_block(&row, 0);
        let mut expected = kernel.eval_sq_dist(0.0);
        for (b, &eta_b) in atoms.iter().enumerate() {
            let d = 1.0 - eta_b;
            expected -= 2.0 * kernel.eval_sq_dist(d * d) * w[b];
            for (a, &eta_a) in atoms.iter().enumerate() {
                let dd = eta_a - eta_b;
                expected += kernel.eval_sq_dist(dd * dd) * w[a] * w[b];
            }
        }
        assert_abs_diff_eq!(loss, expected, epsilon = 1e-12);
    }

    #[test]
    fn mmd2_gradient_matches_finite_differences() {
        let atoms = linspace(-2.0, 2.0, 5);
        let model = jittered(model_with(2, 2, atoms.clone(), 6), 21);
        let target = jittered(model_with(2, 2, atoms, 7), 22);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = random_batch(&mut rng, 2, 2, 6, true);
        let mut cache = cache_for(&model, 0.7, 0.97);
        let (_, grads) = mmd2_bellman_loss(&model, &target, &batch, &mut cache).unwrap();

        let params = model.net().param_vector();
        let mut probe = model.clone();
        assert_fd_matches(&params, &grads, |p| {
            probe.net_mut().set_param_vector(p).unwrap();
            let mut c = cache_for(&probe, 0.7, 0.97);
            mmd2_bellman_loss(&probe, &target, &batch, &mut c).unwrap().0
        });
    }

    #[test]
    fn target_perturbation_moves_the_value_but_gradients_stay_fd_exact() {
        // No gradient leaks into the target branch: v is a constant of the
        // optimization, so the θ-gradient stays finite-difference exact at
        // any θ⁻, and no θ⁻-shaped gradient is ever produced.
        let atoms = linspace(-2.0, 2.0, 5);
        let model = jittered(model_with(2, 2, atoms.clone(), 9), 31);
        let target = jittered(model_with(2, 2, atoms, 10), 32);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let batch = random_batch(&mut rng, 2, 2, 4, false);
        let mut cache = cache_for(&model, 1.1, 0.99);
        let (base_loss, _) = mmd2_bellman_loss(&model, &target, &batch, &mut cache).unwrap();

        let mut shifted = target.clone();
        let mut tparams = shifted.net().param_vector();
        for p in tparams.iter_mut() {
            *p += 0.05;
        }
        shifted.net_mut().set_param_vector(&tparams).unwrap();
        let (shifted_loss, shifted_grads) =
            mmd2_bellman_loss(&model, &shifted, &batch, &mut cache).unwrap();
        assert!(
            (shifted_loss - base_loss).abs() > 1e-9,
            "perturbing the target should move the loss value"
        );

        let params = model.net().param_vector();
        let mut probe = model.clone();
        assert_fd_matches(&params, &shifted_grads, |p| {
            probe.net_mut().set_param_vector(p).unwrap();
            let mut c = cache_for(&probe, 1.1, 0.99);
            mmd2_bellman_loss(&probe, &shifted, &batch, &mut c).unwrap().0
        });
    }

    #[test]
    fn singleton_family_fuse_equals_the_plain_loss() {
        let atoms = linspace(-2.0, 2.0, 5);
        let model = jittered(model_with(2, 2, atoms.clone(), 13), 41);
        let target = jittered(model_with(2, 2, atoms, 14), 42);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let batch = random_batch(&mut rng, 2, 2, 5, true);

        let mut single = cache_for(&model, 0.9, 0.99);
        let (l_single, g_single) = mmd2_bellman_loss(&model, &target, &batch, &mut single).unwrap();
        let mut family = [cache_for(&model, 0.9, 0.99)];
        let (l_fuse, g_fuse) = fuse_loss(&model, &target, &batch, &mut family).unwrap();

        // log_mean_exp of one value is that value; softmax weight is 1.
        assert_eq!(l_single, l_fuse);
        assert_eq!(flatten(&g_single), flatten(&g_fuse));
    }

    #[test]
    fn duplicate_bandwidths_collapse_to_the_single_kernel_value() {
        let atoms = linspace(-2.0, 2.0, 5);
        let model = jittered(model_with(2, 2, atoms.clone(), 16), 51);
        let target = jittered(model_with(2, 2, atoms, 17), 52);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let batch = random_batch(&mut rng, 2, 2, 5, false);

        let mut single = cache_for(&model, 1.3, 0.99);
        let (l_single, _) = mmd2_bellman_loss(&model, &target, &batch, &mut single).unwrap();
        let mut family = [cache_for(&model, 1.3, 0.99), cache_for(&model, 1.3, 0.99)];
        let (l_fuse, _) = fuse_loss(&model, &target, &batch, &mut family).unwrap();
        assert_abs_diff_eq!(l_fuse, l_single, epsilon = 1e-12);
    }

    #[test]
    fn fuse_respects_log_mean_exp_bounds() {
        let sigmas = [0.3, 0.6, 1.0, 2.0, 5.0];
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for trial in 0..10 {
            let atoms = linspace(-3.0, 3.0, 7);
            let model = jittered(model_with(3, 2, atoms.clone(), trial + 20), trial + 61);
            let target = jittered(model_with(3, 2, atoms, trial + 200), trial + 71);
            let batch = random_batch(&mut rng, 3, 2, 4, true);

            let mut per_kernel = Vec::new();
            for &s in &sigmas {
                let mut c = cache_for(&model, s, 0.99);
                per_kernel.push(mmd2_bellman_loss(&model, &target, &batch, &mut c).unwrap().0);
            }
            let max = per_kernel.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));

            let mut caches: Vec<BellmanKernelCache> =
                sigmas.iter().map(|&s| cache_for(&model, s, 0.99)).collect();
            let (fused, _) = fuse_loss(&model, &target, &batch, &mut caches).unwrap();
            let lower = max - (sigmas.len() as f64).ln();
            assert!(
                fused <= max + 1e-12 && fused >= lower - 1e-12,
                "trial {trial}: fused {fused} outside [{lower}, {max}]"
            );
        }
    }

    #[test]
    fn fuse_gradient_matches_finite_differences() {
        let atoms = linspace(-2.0, 2.0, 5);
        let model = jittered(model_with(2, 2, atoms.clone(), 23), 81);
        let target = jittered(model_with(2, 2, atoms, 24), 82);
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let batch = random_batch(&mut rng, 2, 2, 5, true);
        let sigmas = [0.5, 1.0, 2.5];
        let mut caches: Vec<BellmanKernelCache> =
            sigmas.iter().map(|&s| cache_for(&model, s, 0.99)).collect();
        let (_, grads) = fuse_loss(&model, &target, &batch, &mut caches).unwrap();

        let params = model.net().param_vector();
        let mut probe = model.clone();
        assert_fd_matches(&params, &grads, |p| {
            probe.net_mut().set_param_vector(p).unwrap();
            let mut cs: Vec<BellmanKernelCache> =
                sigmas.iter().map(|&s| cache_for(&probe, s, 0.99)).collect();
            fuse_loss(&probe, &target, &batch, &mut cs).unwrap().0
        });
    }

    #[test]
    fn cross_gram_cache_is_bounded_and_reused() {
        let model = model_with(1, 1, linspace(-1.0, 1.0, 5), 26);
        let mut cache = cache_for(&model, 1.0, 0.99);
        let first = cache.cross_gram(0.5).clone();
        let again = cache.cross_gram(0.5).clone();
        assert_eq!(first.data(), again.data());
        assert_eq!(cache.cached_rewards(), 1);
        for i in 0..(CROSS_CACHE_CAP + 10) {
            cache.cross_gram(i as f64 * 0.01);
        }
        assert_eq!(cache.cached_rewards(), CROSS_CACHE_CAP);
    }

    fn dqn_with(obs_dim: usize, num_actions: usize, seed: u64) -> DqnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DqnModel::new(obs_dim, num_actions, &[6], &mut rng).unwrap()
    }

    fn zero_dqn(obs_dim: usize, num_actions: usize, seed: u64) -> DqnModel {
        let mut m = dqn_with(obs_dim, num_actions, seed);
        let n = m.net().num_params();
        m.net_mut().set_param_vector(&vec![0.0; n]).unwrap();
        m
    }

    #[test]
    fn dqn_hand_values() {
        // All-zero networks with r = 0 give loss 0.
        let model = zero_dqn(2, 2, 27);
        let target = model.clone();
        let batch = [Transition {
            state: vec![0.5, -0.5],
            action: 0,
            reward: 0.0,
            next_state: vec![0.1, 0.1],
            terminal: false,
        }];
        let (loss, _) = dqn_loss(&model, &target, &batch, 0.99).unwrap();
        assert_abs_diff_eq!(loss, 0.0, epsilon = 1e-15);

        // Q_θ = 0, max Q⁻ = 2, r = 1, γ = 0.99 → (1 + 1.98)² = 8.8804.
        let mut target = zero_dqn(2, 2, 28);
        let mut params = target.net().param_vector();
        let n = params.len();
        params[n - 1] = 2.0;
        params[n - 2] = 2.0;
        target.net_mut().set_param_vector(&params).unwrap();
        let rewarded = [Transition {
            reward: 1.0,
            ..batch[0].clone()
        }];
        let (loss, _) = dqn_loss(&model, &target, &rewarded, 0.99).unwrap();
        assert_abs_diff_eq!(loss, 8.8804, epsilon = 1e-12);

        // Terminal transitions ignore the target net: target = r.
        let terminal = [Transition {
            terminal: true,
            reward: 1.0,
            ..batch[0].clone()
        }];
        let (loss, _) = dqn_loss(&model, &target, &terminal, 0.99).unwrap();
        assert_abs_diff_eq!(loss, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn dqn_gradient_matches_finite_differences() {
        let mut model = dqn_with(3, 2, 29);
        let mut params = model.net().param_vector();
        jitter(&mut params, 30);
        model.net_mut().set_param_vector(&params).unwrap();
        let target = dqn_with(3, 2, 31);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let batch = random_batch(&mut rng, 3, 2, 6, true);
        let (_, grads) = dqn_loss(&model, &target, &batch, 0.99).unwrap();

        let start = model.net().param_vector();
        let mut probe = model.clone();
        assert_fd_matches(&start, &grads, |p| {
            probe.net_mut().set_param_vector(p).unwrap();
            dqn_loss(&probe, &target, &batch, 0.99).unwrap().0
        });
    }

    #[test]
    fn batch_validation_rejects_malformed_transitions() {
        let model = model_with(2, 2, vec![0.0, 1.0], 33);
        let target = model.clone();
        let mut cache = cache_for(&model, 1.0, 0.99);
        assert!(mmd2_bellman_loss(&model, &target, &[], &mut cache).is_err());

        let bad_action = [Transition {
            state: vec![0.0, 0.0],
            action: 5,
            reward: 0.0,
            next_state: vec![0.0, 0.0],
            terminal: false,
        }];
        assert!(matches!(
            mmd2_bellman_loss(&model, &target, &bad_action, &mut cache),
            Err(Error::Usage(_))
        ));

        let bad_dim = [Transition {
            state: vec![0.0],
            action: 0,
            reward: 0.0,
            next_state: vec![0.0, 0.0],
            terminal: false,
        }];
        assert!(matches!(
            mmd2_bellman_loss(&model, &target, &bad_dim, &mut cache),
            Err(Error::Usage(_))
        ));

        let bad_reward = [Transition {
            state: vec![0.0, 0.0],
            action: 0,
            reward: f64::NAN,
            next_state: vec![0.0, 0.0],
            terminal: false,
        }];
        assert!(matches!(
            mmd2_bellman_loss(&model, &target, &bad_reward, &mut cache),
            Err(Error::Usage(_))
        ));
    }
}
