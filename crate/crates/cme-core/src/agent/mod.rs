//! Distributional Q-learning with CME-parameterized return distributions.
//!
//! The return distribution of each (state, action) pair embeds as
//! `sum_a w_a(s, action) k(., eta_a)` over a fixed atom grid; a softmax head
//! keeps every action's weight vector on the simplex. Learning minimizes the
//! squared MMD between the current embedding and the Bellman target built
//! from the frozen target network, either under one kernel or fused across a
//! bandwidth family with a log-mean-exp. An expectation-only variant (the
//! plain DQN loss) serves as the ablation baseline.

mod loss;
mod train;

pub use loss::{dqn_loss, fuse_loss, mmd2_bellman_loss, BellmanKernelCache};
pub use train::{train_agent, AgentTrainOutput, EvalPoint, TrainedPolicy};

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::estimator::LocationGrid;
use crate::kernels::KernelFamily;
use crate::math::linspace;
use crate::matrix::dot;
use crate::net::{HeadMode, WeightNetwork};
use crate::{Error, Result};

/// Which loss drives parameter updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossMode {
    /// Squared-MMD Bellman loss fused across a bandwidth family.
    Fuse,
    /// Squared-MMD Bellman loss under one bandwidth.
    Single(f64),
    /// Expectation-only temporal-difference baseline.
    Dqn,
}

impl LossMode {
    pub fn name(self) -> &'static str {
        match self {
            LossMode::Fuse => "fuse",
            LossMode::Single(_) => "single",
            LossMode::Dqn => "dqn",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub update_period: usize,
    pub target_sync_period: usize,
    pub epsilon_start: f64,
    pub epsilon_final: f64,
    pub epsilon_decay_steps: usize,
    pub eval_epsilon: f64,
    pub eval_period: usize,
    pub total_steps: usize,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    pub num_atoms: usize,
    pub atom_min: f64,
    pub atom_max: f64,
    pub fuse_bandwidth_count: usize,
    pub hidden_sizes: Vec<usize>,
    pub loss_mode: LossMode,
    pub seed: u64,
}

impl AgentConfig {
    /// Published defaults; the learning rate depends on the environment.
    pub fn defaults_for(env_id: &str) -> Result<Self> {
        let learning_rate = match env_id {
            "cartpole" => 1e-4,
            "acrobot" | "mountaincar" => 1e-3,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown environment {other:?}; expected one of cartpole, acrobot, mountaincar"
                )))
            }
        };
        Ok(Self {
            gamma: 0.99,
            batch_size: 32,
            update_period: 2,
            target_sync_period: 100,
            epsilon_start: 1.0,
            epsilon_final: 0.01,
            epsilon_decay_steps: 10_000,
            eval_epsilon: 0.001,
            eval_period: 100,
            total_steps: 100_000,
            learning_rate,
            buffer_capacity: 10_000,
            num_atoms: 51,
            atom_min: -100.0,
            atom_max: 100.0,
            fuse_bandwidth_count: 10,
            hidden_sizes: alloc::vec![50, 50],
            loss_mode: LossMode::Fuse,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("update_period", self.update_period),
            ("target_sync_period", self.target_sync_period),
            ("eval_period", self.eval_period),
            ("buffer_capacity", self.buffer_capacity),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_final)
            || !(0.0..=1.0).contains(&self.eval_epsilon)
        {
            return Err(Error::InvalidArgument(
                "epsilon values must lie in [0, 1]".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.num_atoms < 2 {
            return Err(Error::InvalidArgument(format!(
                "num_atoms must be at least 2, got {}",
                self.num_atoms
            )));
        }
        if !(self.atom_min < self.atom_max) {
            return Err(Error::InvalidArgument(format!(
                "atom range [{}, {}] is degenerate",
                self.atom_min, self.atom_max
            )));
        }
        if self.fuse_bandwidth_count == 0 && matches!(self.loss_mode, LossMode::Fuse) {
            return Err(Error::InvalidArgument(
                "fuse mode needs at least 1 bandwidth".into(),
            ));
        }
        if let LossMode::Single(s) = self.loss_mode {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "single-kernel bandwidth must be positive and finite, got {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn atoms(&self) -> Vec<f64> {
        linspace(self.atom_min, self.atom_max, self.num_atoms)
    }
}

/// Return-distribution embedding model: one weight block per action. The
/// kernel family rides along so losses and checkpoints agree on bandwidths.
#[derive(Clone, Debug)]
pub struct ZDistributionModel {
    net: WeightNetwork,
    grid: LocationGrid,
    family: KernelFamily,
    num_actions: usize,
}

impl ZDistributionModel {
    pub fn new(
        obs_dim: usize,
        num_actions: usize,
        hidden_sizes: &[usize],
        atoms: Vec<f64>,
        family: KernelFamily,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if num_actions == 0 {
            return Err(Error::InvalidArgument("need at least one action".into()));
        }
        if family.kernels().iter().any(|k| k.dim() != 1) {
            return Err(Error::InvalidArgument(
                "return distributions are scalar; kernel family must have dim 1".into(),
            ));
        }
        let grid = LocationGrid::new(atoms)?;
        let mut sizes = Vec::with_capacity(hidden_sizes.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(hidden_sizes);
        sizes.push(num_actions * grid.len());
        let net = WeightNetwork::new(
            &sizes,
            HeadMode::SoftmaxPerGroup {
                group_size: grid.len(),
            },
            &[],
            rng,
        )?;
        Ok(Self {
            net,
            grid,
            family,
            num_actions,
        })
    }

    pub fn kernel_family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn net(&self) -> &WeightNetwork {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut WeightNetwork {
        &mut self.net
    }

    /// Restores trained parameters, e.g. from a checkpoint.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.net.set_param_vector(params)
    }

    pub fn atoms(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_atoms(&self) -> usize {
        self.grid.len()
    }

    /// Weight vector over atoms for one action, sliced from a full forward
    /// output row.
    pub fn action_block<'a>(&self, row: &'a [f64], action: usize) -> &'a [f64] {
        let m = self.grid.len();
        &row[action * m..(action + 1) * m]
    }

    /// Q(s, a) for every action: expectations of the embedded distributions.
    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        let out = self.net.forward(state)?;
        Ok(self.q_values_from_row(&out))
    }

    pub(crate) fn q_values_from_row(&self, row: &[f64]) -> Vec<f64> {
        (0..self.num_actions)
            .map(|a| dot(self.grid.points(), self.action_block(row, a)))
            .collect()
    }

    pub fn q_value(&self, state: &[f64], action: usize) -> Result<f64> {
        if action >= self.num_actions {
            return Err(Error::Usage(format!(
                "action {action} out of range for {} actions",
                self.num_actions
            )));
        }
        Ok(self.q_values(state)?[action])
    }

    /// Ties resolve to the lowest action index.
    pub fn greedy_action(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax_lowest(&self.q_values(state)?))
    }
}

/// Expectation-only model for the DQN ablation: linear head, one Q per action.
#[derive(Clone, Debug)]
pub struct DqnModel {
    net: WeightNetwork,
    num_actions: usize,
}

impl DqnModel {
    pub fn new(
        obs_dim: usize,
        num_actions: usize,
        hidden_sizes: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if num_actions == 0 {
            return Err(Error::InvalidArgument("need at least one action".into()));
        }
        let mut sizes = Vec::with_capacity(hidden_sizes.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(hidden_sizes);
        sizes.push(num_actions);
        let net = WeightNetwork::new(&sizes, HeadMode::Linear, &[], rng)?;
        Ok(Self { net, num_actions })
    }

    pub fn net(&self) -> &WeightNetwork {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut WeightNetwork {
        &mut self.net
    }

    /// Restores trained parameters, e.g. from a checkpoint.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.net.set_param_vector(params)
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(state)
    }

    pub fn greedy_action(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax_lowest(&self.q_values(state)?))
    }
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// FIFO ring of transitions with seeded uniform batch sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be at least 1".into()));
        }
        Ok(Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform sample without replacement within the batch.
    pub fn sample(&mut self, batch: usize) -> Result<Vec<Transition>> {
        if batch == 0 || batch > self.items.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot sample {batch} transitions from a buffer holding {}",
                self.items.len()
            )));
        }
        let picks = rand::seq::index::sample(&mut self.rng, self.items.len(), batch);
        Ok(picks.iter().map(|i| self.items[i].clone()).collect())
    }
}
