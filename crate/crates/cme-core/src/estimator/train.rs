//! Minibatch training loop for the estimator.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(not(feature = "std"))]
use crate::math::FloatExt;
use crate::data::LabeledDataset;
use crate::matrix::Mat;
use crate::net::{adamw_step, AdamWConfig, HeadMode, OptimizerState, ScalarAdamW, WeightNetwork};
use crate::{Error, Result};

use super::{make_grid, rkhs_loss, sq_loss, CmeModel};

/// How the bandwidth evolves during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Alternate: network steps on the RKHS loss, bandwidth steps on the
    /// squared-error loss every `sigma_update_period` network steps.
    Iterative,
    /// Network and bandwidth both step on the RKHS loss.
    Joint,
    /// Bandwidth stays at `sigma_init`.
    FixedSigma,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Iterative => "iterative",
            Strategy::Joint => "joint",
            Strategy::FixedSigma => "fixed",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "iterative" => Ok(Strategy::Iterative),
            "joint" => Ok(Strategy::Joint),
            "fixed" => Ok(Strategy::FixedSigma),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy {other:?}; expected one of iterative, joint, fixed"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainingConfig {
    pub strategy: Strategy,
    pub sigma_init: f64,
    pub sigma_update_period: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grid_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub spectral_norm: bool,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Joint,
            sigma_init: 1.0,
            sigma_update_period: 1,
            epochs: 1000,
            batch_size: 50,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            grid_size: 100,
            hidden_sizes: alloc::vec![50, 50],
            spectral_norm: false,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_init > 0.0 && self.sigma_init.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_init must be positive and finite, got {}",
                self.sigma_init
            )));
        }
        if self.sigma_update_period == 0 {
            return Err(Error::InvalidArgument(
                "sigma_update_period must be at least 1".into(),
            ));
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
        if self.grid_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid_size must be at least 2, got {}",
                self.grid_size
            )));
        }
        Ok(())
    }
}

/// One row of the training trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean RKHS loss over the epoch's minibatches.
    pub loss: f64,
    /// Bandwidth at the end of the epoch.
    pub sigma: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: CmeModel,
    pub history: Vec<EpochRecord>,
}

/// Trains an estimator on a standardized dataset.
pub fn train(dataset: &LabeledDataset, config: &TrainingConfig) -> Result<TrainOutput> {
    config.validate()?;
    if !dataset.is_standardized() {
        return Err(Error::Usage(
            "train expects a standardized dataset; call LabeledDataset::standardized first".into(),
        ));
    }
    let grid = make_grid(dataset.outputs(), config.grid_size)?;

    let mut sizes = Vec::with_capacity(config.hidden_sizes.len() + 2);
    sizes.push(dataset.input_dim());
    sizes.extend_from_slice(&config.hidden_sizes);
    sizes.push(config.grid_size);
    let spectral: Vec<usize> = if config.spectral_norm {
        let num_layers = sizes.len() - 1;
        if num_layers == 1 {
            alloc::vec![0]
        } else {
            (1..num_layers).collect()
        }
    } else {
        Vec::new()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = WeightNetwork::new(&sizes, HeadMode::Linear, &spectral, &mut rng)?;

    let theta_cfg = AdamWConfig::default()
        .with_learning_rate(config.learning_rate)
        .with_weight_decay(config.weight_decay);
    let mut theta_opt = OptimizerState::new(&net, theta_cfg)?;
    // Decay on log sigma would pull the bandwidth toward 1, so it is off.
    let sigma_cfg = AdamWConfig::default()
        .with_learning_rate(config.learning_rate)
        .with_weight_decay(0.0);
    let mut sigma_opt = ScalarAdamW::new(sigma_cfg)?;
    let mut log_sigma = config.sigma_init.ln();

    let mut history = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut global_step: usize = 0;

    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;

        for chunk in indices.chunks(config.batch_size) {
            let (xb, yb) = gather(dataset, chunk);
            let sigma = log_sigma.exp();
            let step_sigma = (global_step + 1) % config.sigma_update_period == 0;
            let diverged = |err: Error| {
                Error::Numerical(format!(
                    "training diverged at epoch {epoch}, step {global_step}: {err}"
                ))
            };

            match config.strategy {
                Strategy::Joint => {
                    let eval =
                        rkhs_loss(&net, &xb, &yb, &grid, sigma, step_sigma).map_err(diverged)?;
                    adamw_step(&mut net, &eval.theta_grads, &mut theta_opt).map_err(diverged)?;
                    if step_sigma {
                        sigma_opt
                            .step(&mut log_sigma, sigma * eval.sigma_grad)
                            .map_err(diverged)?;
                    }
                    loss_sum += eval.value;
                }
                Strategy::Iterative => {
                    let eval = rkhs_loss(&net, &xb, &yb, &grid, sigma, false).map_err(diverged)?;
                    adamw_step(&mut net, &eval.theta_grads, &mut theta_opt).map_err(diverged)?;
                    if step_sigma {
                        let sq = sq_loss(&net, &xb, &yb, &grid, sigma).map_err(diverged)?;
                        sigma_opt
                            .step(&mut log_sigma, sigma * sq.sigma_grad)
                            .map_err(diverged)?;
                    }
                    loss_sum += eval.value;
                }
                Strategy::FixedSigma => {
                    let eval = rkhs_loss(&net, &xb, &yb, &grid, sigma, false).map_err(diverged)?;
                    adamw_step(&mut net, &eval.theta_grads, &mut theta_opt).map_err(diverged)?;
                    loss_sum += eval.value;
                }
            }
            if config.spectral_norm {
                net.spectral_normalize_marked(1);
            }
            if !log_sigma.is_finite() {
                return Err(Error::Numerical(format!(
                    "bandwidth diverged at epoch {epoch}, step {global_step}: log sigma {log_sigma}"
                )));
            }
            global_step += 1;
            batches += 1;
        }

        history.push(EpochRecord {
            epoch,
            loss: loss_sum / batches.max(1) as f64,
            sigma: log_sigma.exp(),
        });
    }

    let model = CmeModel::from_parts(net, grid, log_sigma.exp())?;
    Ok(TrainOutput { model, history })
}

/// Copies the indexed rows into a dense minibatch.
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_toy, ToyFamily, ToySpec};

    fn standardized_toy(n: usize, seed: u64) -> LabeledDataset {
        let raw = generate_toy(&ToySpec {
            family: ToyFamily::Bimodal,
            n,
            seed,
        })
        .unwrap();
        raw.standardized().unwrap().0
    }

    fn quick_config(strategy: Strategy, epochs: usize) -> TrainingConfig {
        TrainingConfig {
            strategy,
            epochs,
            batch_size: 50,
            learning_rate: 1e-3,
            grid_size: 30,
            hidden_sizes: alloc::vec![16, 16],
            seed: 7,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [Strategy::Iterative, Strategy::Joint, Strategy::FixedSigma] {
            assert_eq!(Strategy::parse(s.name()).unwrap(), s);
        }
        assert!(Strategy::parse("annealed").is_err());
    }

    #[test]
    fn zero_epochs_returns_initialized_model() {
        let data = standardized_toy(100, 0);
        let config = quick_config(Strategy::Joint, 0);
        let out = train(&data, &config).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.model.sigma(), config.sigma_init);
        assert_eq!(out.model.grid().len(), config.grid_size);
    }

    #[test]
    fn rejects_raw_dataset() {
        let raw = generate_toy(&ToySpec {
            family: ToyFamily::Bimodal,
            n: 100,
            seed: 0,
        })
        .unwrap();
        let err = train(&raw, &quick_config(Strategy::Joint, 1)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn training_is_deterministic() {
        let data = standardized_toy(150, 3);
        let config = quick_config(Strategy::Joint, 5);
        let a = train(&data, &config).unwrap();
        let b = train(&data, &config).unwrap();
        assert_eq!(
            a.model.net().param_vector(),
            b.model.net().param_vector()
        );
        assert_eq!(a.model.sigma(), b.model.sigma());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn fixed_strategy_never_moves_sigma() {
        let data = standardized_toy(150, 4);
        let out = train(&data, &quick_config(Strategy::FixedSigma, 5)).unwrap();
        assert_eq!(out.model.sigma(), 1.0);
        assert!(out.history.iter().all(|r| r.sigma == 1.0));
    }

    #[test]
    fn adaptive_strategies_move_sigma_and_reduce_loss() {
        let data = standardized_toy(300, 5);
        for strategy in [Strategy::Joint, Strategy::Iterative] {
            let out = train(&data, &quick_config(strategy, 40)).unwrap();
            let first = out.history.first().unwrap();
            let last = out.history.last().unwrap();
            assert_ne!(last.sigma, 1.0, "{strategy:?} left sigma untouched");
            assert!(last.sigma > 0.0 && last.sigma.is_finite());
            assert!(
                last.loss < first.loss,
                "{strategy:?}: loss failed to decrease ({} -> {})",
                first.loss,
                last.loss
            );
        }
    }

    #[test]
    fn sigma_update_period_gates_bandwidth_steps() {
        let data = standardized_toy(100, 6);
        // 100 points, batch 50: 2 steps per epoch, 1 epoch = steps 1 and 2.
        // Period 3 means neither step touches sigma.
        let config = TrainingConfig {
            sigma_update_period: 3,
            ..quick_config(Strategy::Iterative, 1)
        };
        let out = train(&data, &config).unwrap();
        assert_eq!(out.model.sigma(), 1.0);
        // With two more epochs, step 3 lands and sigma moves.
        let config = TrainingConfig {
            sigma_update_period: 3,
            ..quick_config(Strategy::Iterative, 2)
        };
        let out = train(&data, &config).unwrap();
        assert_ne!(out.model.sigma(), 1.0);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let bad = |f: fn(&mut TrainingConfig)| {
            let mut c = TrainingConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.sigma_init = 0.0));
        assert!(bad(|c| c.sigma_init = f64::NAN));
        assert!(bad(|c| c.sigma_update_period = 0));
        assert!(bad(|c| c.batch_size = 0));
        assert!(bad(|c| c.learning_rate = 0.0));
        assert!(bad(|c| c.weight_decay = -0.1));
        assert!(bad(|c| c.grid_size = 1));
        assert!(TrainingConfig::default().validate().is_ok());
    }
}
