//! Training loop: ε-greedy interaction, uniform replay, periodic loss steps,
//! target-network syncs, and greedy evaluation episodes.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{make_env, Environment};
use crate::kernels::{fuse_bandwidth_grid, KernelFamily};
use crate::net::{adamw_step, AdamWConfig, OptimizerState};
use crate::{Error, Result};

use super::loss::{dqn_loss, fuse_loss, mmd2_bellman_loss, BellmanKernelCache};
use super::{AgentConfig, DqnModel, LossMode, ReplayBuffer, Transition, ZDistributionModel};

/// One evaluation episode's return, recorded after `step` environment steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub eval_return: f64,
}

/// Final model of a run, distributional or expectation-only.
#[derive(Clone, Debug)]
pub enum TrainedPolicy {
    Distributional(ZDistributionModel),
    Expectation(DqnModel),
}

impl TrainedPolicy {
    pub fn greedy_action(&self, state: &[f64]) -> Result<usize> {
        match self {
            TrainedPolicy::Distributional(m) => m.greedy_action(state),
            TrainedPolicy::Expectation(m) => m.greedy_action(state),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            TrainedPolicy::Distributional(m) => m.num_actions(),
            TrainedPolicy::Expectation(m) => m.num_actions(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AgentTrainOutput {
    pub policy: TrainedPolicy,
    pub curve: Vec<EvalPoint>,
}

/// Linear decay from `epsilon_start` to `epsilon_final` over
/// `epsilon_decay_steps` environment steps, then flat.
pub(super) fn epsilon_at(config: &AgentConfig, step: usize) -> f64 {
    if step >= config.epsilon_decay_steps || config.epsilon_decay_steps == 0 {
        return config.epsilon_final;
    }
    let frac = step as f64 / config.epsilon_decay_steps as f64;
    config.epsilon_start + (config.epsilon_final - config.epsilon_start) * frac
}

enum Learner {
    Z {
        model: ZDistributionModel,
        target: ZDistributionModel,
        caches: Vec<BellmanKernelCache>,
        fuse: bool,
        opt: OptimizerState,
    },
    Q {
        model: DqnModel,
        target: DqnModel,
        opt: OptimizerState,
    },
}

impl Learner {
    fn new(
        obs_dim: usize,
        num_actions: usize,
        config: &AgentConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let adamw = AdamWConfig::default()
            .with_learning_rate(config.learning_rate)
            .with_weight_decay(0.0);
        match config.loss_mode {
            LossMode::Dqn => {
                let model = DqnModel::new(obs_dim, num_actions, &config.hidden_sizes, rng)?;
                let opt = OptimizerState::new(model.net(), adamw)?;
                let target = model.clone();
                Ok(Learner::Q { model, target, opt })
            }
            LossMode::Fuse | LossMode::Single(_) => {
                let atoms = config.atoms();
                let family = match config.loss_mode {
                    LossMode::Fuse => fuse_bandwidth_grid(&atoms, config.fuse_bandwidth_count)?,
                    LossMode::Single(sigma) => KernelFamily::new(&[sigma], 1)?,
                    LossMode::Dqn => unreachable!("handled above"),
                };
                let model = ZDistributionModel::new(
                    obs_dim,
                    num_actions,
                    &config.hidden_sizes,
                    atoms.clone(),
                    family,
                    rng,
                )?;
                let caches = model
                    .kernel_family()
                    .kernels()
                    .iter()
                    .map(|k| BellmanKernelCache::new(k.clone(), &atoms, config.gamma))
                    .collect::<Result<Vec<_>>>()?;
                let opt = OptimizerState::new(model.net(), adamw)?;
                let target = model.clone();
                Ok(Learner::Z {
                    model,
                    target,
                    caches,
                    fuse: matches!(config.loss_mode, LossMode::Fuse),
                    opt,
                })
            }
        }
    }

    fn greedy(&self, state: &[f64]) -> Result<usize> {
        match self {
            Learner::Z { model, .. } => model.greedy_action(state),
            Learner::Q { model, .. } => model.greedy_action(state),
        }
    }

    fn update(&mut self, batch: &[Transition], gamma: f64) -> Result<f64> {
        match self {
            Learner::Z {
                model,
                target,
                caches,
                fuse,
                opt,
            } => {
                let (loss, grads) = if *fuse {
                    fuse_loss(model, target, batch, caches)?
                } else {
                    mmd2_bellman_loss(model, target, batch, &mut caches[0])?
                };
                adamw_step(model.net_mut(), &grads, opt)?;
                Ok(loss)
            }
            Learner::Q {
                model,
                target,
                opt,
            } => {
                let (loss, grads) = dqn_loss(model, target, batch, gamma)?;
                adamw_step(model.net_mut(), &grads, opt)?;
                Ok(loss)
            }
        }
    }

    fn sync_target(&mut self) {
        match self {
            Learner::Z { model, target, .. } => *target = model.clone(),
            Learner::Q { model, target, .. } => *target = model.clone(),
        }
    }

    fn into_policy(self) -> TrainedPolicy {
        match self {
            Learner::Z { model, .. } => TrainedPolicy::Distributional(model),
            Learner::Q { model, .. } => TrainedPolicy::Expectation(model),
        }
    }
}

fn eval_episode(
    env: &mut (dyn Environment + '_),
    learner: &Learner,
    eval_epsilon: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_actions = env.num_actions();
    let mut obs = env.reset(rng.random()).observation;
    let mut total = 0.0;
    loop {
        let action = if rng.random::<f64>() < eval_epsilon {
            rng.random_range(0..num_actions)
        } else {
            learner.greedy(&obs)?
        };
        let step = env.step(action)?;
        total += step.reward;
        if step.done() {
            return Ok(total);
        }
        obs = step.next_observation;
    }
}

/// Runs the full interaction loop for `config.total_steps` environment steps.
/// All randomness (exploration, resets, replay, evaluation) derives from
/// `config.seed`.
pub fn train_agent(env_id: &str, config: &AgentConfig) -> Result<AgentTrainOutput> {
    config.validate()?;
    let mut env: Box<dyn Environment> = make_env(env_id)?;
    let mut eval_env: Box<dyn Environment> = make_env(env_id)?;
    let num_actions = env.num_actions();
    let obs_dim = env.obs_dim();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut learner = Learner::new(obs_dim, num_actions, config, &mut rng)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, rng.random())?;

    let mut curve = Vec::new();
    let mut obs = env.reset(rng.random()).observation;
    for step in 0..config.total_steps {
        let action = if rng.random::<f64>() < epsilon_at(config, step) {
            rng.random_range(0..num_actions)
        } else {
            learner.greedy(&obs)?
        };
        let result = env.step(action)?;
        buffer.push(Transition {
            state: obs,
            action,
            reward: result.reward,
            next_state: result.next_observation.clone(),
            terminal: result.terminated,
        });
        obs = if result.done() {
            env.reset(rng.random()).observation
        } else {
            result.next_observation
        };

        let completed = step + 1;
        if completed % config.update_period == 0 && buffer.len() >= config.batch_size {
            let batch = buffer.sample(config.batch_size)?;
            let loss = learner.update(&batch, config.gamma).map_err(|err| {
                Error::Numerical(format!("training diverged at step {completed}: {err}"))
            })?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "training diverged at step {completed}: loss {loss}"
                )));
            }
        }
        if completed % config.target_sync_period == 0 {
            learner.sync_target();
        }
        if completed % config.eval_period == 0 {
            let eval_seed = rng.random();
            let eval_return =
                eval_episode(eval_env.as_mut(), &learner, config.eval_epsilon, eval_seed)?;
            curve.push(EvalPoint {
                step: completed,
                eval_return,
            });
        }
    }
    Ok(AgentTrainOutput {
        policy: learner.into_policy(),
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn quick_config(env_id: &str, mode: LossMode, total: usize) -> AgentConfig {
        let mut c = AgentConfig::defaults_for(env_id).unwrap();
        c.loss_mode = mode;
        c.total_steps = total;
        c.hidden_sizes = vec![16, 16];
        c.batch_size = 16;
        c.buffer_capacity = 256;
        c
    }

    #[test]
    fn epsilon_decays_linearly_then_floors() {
        let c = AgentConfig::defaults_for("cartpole").unwrap();
        assert_abs_diff_eq!(epsilon_at(&c, 0), 1.0);
        assert_abs_diff_eq!(epsilon_at(&c, 5_000), 0.505, epsilon = 1e-12);
        assert_abs_diff_eq!(epsilon_at(&c, 10_000), 0.01);
        assert_abs_diff_eq!(epsilon_at(&c, 50_000), 0.01);
    }

    #[test]
    fn zero_total_steps_yields_initial_model_and_empty_curve() {
        let config = quick_config("cartpole", LossMode::Fuse, 0);
        let out = train_agent("cartpole", &config).unwrap();
        assert!(out.curve.is_empty());
        assert_eq!(out.policy.num_actions(), 2);
        let action = out.policy.greedy_action(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(action < 2);
        match &out.policy {
            TrainedPolicy::Distributional(m) => {
                assert_eq!(m.atoms().len(), 51);
                assert_eq!(m.kernel_family().len(), 10);
            }
            TrainedPolicy::Expectation(_) => panic!("expected a distributional policy"),
        }
    }

    #[test]
    fn short_runs_are_bitwise_reproducible() {
        let config = quick_config("cartpole", LossMode::Single(10.0), 300);
        let a = train_agent("cartpole", &config).unwrap();
        let b = train_agent("cartpole", &config).unwrap();
        assert_eq!(a.curve.len(), 3);
        assert_eq!(a.curve, b.curve);
        match (&a.policy, &b.policy) {
            (TrainedPolicy::Distributional(ma), TrainedPolicy::Distributional(mb)) => {
                assert_eq!(ma.net().param_vector(), mb.net().param_vector());
            }
            _ => panic!("expected distributional policies"),
        }
    }

    #[test]
    fn different_seeds_diverge() {
        let config = quick_config("cartpole", LossMode::Single(10.0), 200);
        let mut other = config.clone();
        other.seed = 1;
        let a = train_agent("cartpole", &config).unwrap();
        let b = train_agent("cartpole", &other).unwrap();
        match (&a.policy, &b.policy) {
            (TrainedPolicy::Distributional(ma), TrainedPolicy::Distributional(mb)) => {
                assert_ne!(ma.net().param_vector(), mb.net().param_vector());
            }
            _ => panic!("expected distributional policies"),
        }
    }

    #[test]
    fn fuse_updates_keep_action_weights_on_the_simplex() {
        let config = quick_config("cartpole", LossMode::Fuse, 150);
        let out = train_agent("cartpole", &config).unwrap();
        let model = match &out.policy {
            TrainedPolicy::Distributional(m) => m,
            TrainedPolicy::Expectation(_) => panic!("expected a distributional policy"),
        };
        for obs in [
            [0.0, 0.0, 0.0, 0.0],
            [0.3, -1.0, 0.05, 0.5],
            [-1.5, 2.0, -0.1, -1.0],
        ] {
            let row = model.net().forward(&obs).unwrap();
            for a in 0..model.num_actions() {
                let block = model.action_block(&row, a);
                let sum: f64 = block.iter().sum();
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
                assert!(block.iter().all(|&w| w >= 0.0));
            }
        }
    }

    #[test]
    fn dqn_mode_runs_and_records_evaluations() {
        let config = quick_config("cartpole", LossMode::Dqn, 150);
        let out = train_agent("cartpole", &config).unwrap();
        assert_eq!(out.curve.len(), 1);
        assert_eq!(out.curve[0].step, 100);
        let r = out.curve[0].eval_return;
        assert!((1.0..=500.0).contains(&r), "eval return {r}");
        assert!(matches!(out.policy, TrainedPolicy::Expectation(_)));
    }

    #[test]
    fn mountain_car_defaults_run() {
        let mut config = quick_config("mountaincar", LossMode::Single(10.0), 120);
        config.eval_period = 60;
        let out = train_agent("mountaincar", &config).unwrap();
        assert_eq!(out.curve.len(), 2);
        for p in &out.curve {
            assert!((-200.0..=0.0).contains(&p.eval_return));
        }
    }

    #[test]
    fn unknown_environment_is_rejected() {
        let config = quick_config("cartpole", LossMode::Fuse, 10);
        assert!(train_agent("lunarlander", &config).is_err());
    }
}
