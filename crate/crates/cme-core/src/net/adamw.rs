//! Adam with decoupled weight decay.

use alloc::format;

#[cfg(not(feature = "std"))]
use crate::math::FloatExt;
use crate::net::{Gradients, WeightNetwork};
use crate::{Error, Result};

/// AdamW hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
            || self.weight_decay < 0.0
        {
            return Err(Error::InvalidArgument(format!(
                "invalid AdamW hyperparameters: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Moment accumulators for one [`WeightNetwork`].
#[derive(Clone, Debug)]
pub struct OptimizerState {
    first_moment: Gradients,
    second_moment: Gradients,
    step_count: u64,
    config: AdamWConfig,
}

impl OptimizerState {
    pub fn new(net: &WeightNetwork, config: AdamWConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
            step_count: 0,
            config,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }
}

/// One AdamW update: bias-corrected moment step plus decoupled weight decay,
/// `p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)`.
pub fn adamw_step(
    net: &mut WeightNetwork,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<()> {
    let n_layers = net.layers().len();
    if grads.layers().len() != n_layers {
        return Err(Error::Shape(format!(
            "gradients cover {} layers, network has {n_layers}",
            grads.layers().len()
        )));
    }
    for (l, lg) in grads.layers().iter().enumerate() {
        if !lg.weight.iter().all(f64::is_finite) || !lg.bias.iter().all(|b| b.is_finite()) {
            return Err(Error::Optimizer(format!(
                "non-finite gradient in layer {l} ({}x{})",
                lg.weight.rows(),
                lg.weight.cols()
            )));
        }
    }

    state.step_count += 1;
    let c = state.config;
    let bias1 = 1.0 - c.beta1.powi(state.step_count as i32);
    let bias2 = 1.0 - c.beta2.powi(state.step_count as i32);

    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        let lg = &grads.layers()[l];
        let m = &mut state.first_moment.layers[l];
        let v = &mut state.second_moment.layers[l];

        for ((p, &g), (m_i, v_i)) in layer
            .weight
            .data_mut()
            .iter_mut()
            .zip(lg.weight.data())
            .zip(m.weight.data_mut().iter_mut().zip(v.weight.data_mut()))
        {
            *m_i = c.beta1 * *m_i + (1.0 - c.beta1) * g;
            *v_i = c.beta2 * *v_i + (1.0 - c.beta2) * g * g;
            let m_hat = *m_i / bias1;
            let v_hat = *v_i / bias2;
            *p -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * *p);
        }
        for ((p, &g), (m_i, v_i)) in layer
            .bias
            .iter_mut()
            .zip(&lg.bias)
            .zip(m.bias.iter_mut().zip(v.bias.iter_mut()))
        {
            *m_i = c.beta1 * *m_i + (1.0 - c.beta1) * g;
            *v_i = c.beta2 * *v_i + (1.0 - c.beta2) * g * g;
            let m_hat = *m_i / bias1;
            let v_hat = *v_i / bias2;
            // Biases are not weight-decayed, the standard decoupled convention.
            *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
    }
    Ok(())
}

/// AdamW for a single scalar parameter (used for `log sigma`).
#[derive(Clone, Debug)]
pub struct ScalarAdamW {
    m: f64,
    v: f64,
    step_count: u64,
    config: AdamWConfig,
}

impl ScalarAdamW {
    pub fn new(config: AdamWConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            m: 0.0,
            v: 0.0,
            step_count: 0,
            config,
        })
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) -> Result<()> {
        if !grad.is_finite() {
            return Err(Error::Optimizer(format!(
                "non-finite gradient {grad} for scalar parameter"
            )));
        }
        self.step_count += 1;
        let c = self.config;
        self.m = c.beta1 * self.m + (1.0 - c.beta1) * grad;
        self.v = c.beta2 * self.v + (1.0 - c.beta2) * grad * grad;
        let m_hat = self.m / (1.0 - c.beta1.powi(self.step_count as i32));
        let v_hat = self.v / (1.0 - c.beta2.powi(self.step_count as i32));
        *param -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * *param);
        Ok(())
    }
}
