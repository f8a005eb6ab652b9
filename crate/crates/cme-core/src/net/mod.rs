//! Feed-forward weight networks with exact reverse-mode gradients.
//!
//! A [`WeightNetwork`] is an MLP with ReLU hidden layers and a configurable
//! output head. Gradients are hand-derived per loss: callers run
//! [`WeightNetwork::forward_batch_trace`], form the upstream gradient of
//! their loss with respect to the network outputs, and feed it to
//! [`WeightNetwork::backward`]. Everything is `f64` and deterministic; the
//! nets here are tiny, so reproducibility is worth more than speed.

mod adamw;
mod spectral;

pub use adamw::{adamw_step, AdamWConfig, OptimizerState, ScalarAdamW};
pub use spectral::{spectral_normalize, SpectralOutcome};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

#[cfg(not(feature = "std"))]
use crate::math::FloatExt;
use crate::matrix::Mat;
use crate::{Error, Result};

/// Output-layer nonlinearity.
///
/// Density estimation uses [`HeadMode::Linear`] (weights are unconstrained);
/// the RL agent uses [`HeadMode::SoftmaxPerGroup`] so each action's weight
/// block is a probability vector over return atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadMode {
    Linear,
    SoftmaxPerGroup { group_size: usize },
}

/// One dense layer storing `weight` as an `out x in` matrix.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub weight: Mat,
    pub bias: Vec<f64>,
    /// Warm-started left singular vector estimate for spectral normalization.
    pub(crate) power_vector: Option<Vec<f64>>,
}

impl DenseLayer {
    pub fn new(weight: Mat, bias: Vec<f64>) -> Self {
        assert_eq!(weight.rows(), bias.len(), "bias length must match rows");
        Self {
            weight,
            bias,
            power_vector: None,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.rows()
    }
}

/// MLP mapping inputs to embedding weights; ReLU on hidden layers.
#[derive(Clone, Debug)]
pub struct WeightNetwork {
    layer_sizes: Vec<usize>,
    layers: Vec<DenseLayer>,
    head: HeadMode,
    spectral_layers: Vec<usize>,
}

/// Per-layer activations recorded by a forward pass, consumed by
/// [`WeightNetwork::backward`].
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Input to each layer: `layer_inputs[0]` is the batch itself, then the
    /// post-ReLU output of each hidden layer.
    layer_inputs: Vec<Mat>,
    /// Post-head network output.
    output: Mat,
}

impl ForwardTrace {
    pub fn output(&self) -> &Mat {
        &self.output
    }

    pub fn into_output(self) -> Mat {
        self.output
    }
}

/// Parameter-shaped gradient container.
#[derive(Clone, Debug)]
pub struct Gradients {
    layers: Vec<LayerGrads>,
}

#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &WeightNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: Mat::zeros(l.fan_out(), l.fan_in()),
                    bias: vec![0.0; l.fan_out()],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerGrads] {
        &self.layers
    }

    /// `self += scale * other`.
    pub fn add_assign_scaled(&mut self, other: &Gradients, scale: f64) {
        assert_eq!(self.layers.len(), other.layers.len(), "layer count mismatch");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_assign_scaled(&b.weight, scale);
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.scale_in_place(factor);
            for b in &mut l.bias {
                *b *= factor;
            }
        }
    }

    /// Flattens in the network's deterministic parameter order.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(f64::is_finite) && l.bias.iter().all(|b| b.is_finite()))
    }
}

impl WeightNetwork {
    /// Builds a network with He-uniform weights (`limit = sqrt(6 / fan_in)`)
    /// and zero biases. `spectral_layers` lists layer indices to constrain to
    /// unit spectral norm during training; their power vectors are seeded
    /// from `rng` here.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        head: HeadMode,
        spectral_layers: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a network needs at least input and output sizes".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument(
                "all layer sizes must be positive".into(),
            ));
        }
        let output_dim = *layer_sizes.last().expect("checked nonempty");
        if let HeadMode::SoftmaxPerGroup { group_size } = head {
            if group_size == 0 || output_dim % group_size != 0 {
                return Err(Error::InvalidArgument(format!(
                    "softmax group size {group_size} must divide the output dimension {output_dim}"
                )));
            }
        }
        let n_layers = layer_sizes.len() - 1;
        let mut spectral: Vec<usize> = spectral_layers.to_vec();
        spectral.sort_unstable();
        spectral.dedup();
        if spectral.iter().any(|&i| i >= n_layers) {
            return Err(Error::InvalidArgument(format!(
                "spectral layer index out of range; network has {n_layers} layers"
            )));
        }

        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let fan_in = layer_sizes[l];
            let fan_out = layer_sizes[l + 1];
            let limit = (6.0 / fan_in as f64).sqrt();
            let weight = Mat::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit));
            let mut layer = DenseLayer::new(weight, vec![0.0; fan_out]);
            if spectral.contains(&l) {
                let mut v: Vec<f64> = (0..fan_out).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    for x in &mut v {
                        *x /= norm;
                    }
                } else {
                    v[0] = 1.0;
                }
                layer.power_vector = Some(v);
            }
            layers.push(layer);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            head,
            spectral_layers: spectral,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated at construction")
    }

    pub fn head_mode(&self) -> HeadMode {
        self.head
    }

    pub fn spectral_layers(&self) -> &[usize] {
        &self.spectral_layers
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.fan_out() * (l.fan_in() + 1))
            .sum()
    }

    /// Evaluates a single input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_batch_trace(&Mat::row_vector(x))?;
        Ok(trace.output.row(0).to_vec())
    }

    /// Evaluates a batch (rows are inputs) without keeping the trace.
    pub fn forward_batch(&self, x: &Mat) -> Result<Mat> {
        Ok(self.forward_batch_trace(x)?.into_output())
    }

    /// Evaluates a batch and records activations for [`Self::backward`].
    pub fn forward_batch_trace(&self, x: &Mat) -> Result<ForwardTrace> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has width {}, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = current.matmul_transpose_b(&layer.weight);
            for i in 0..z.rows() {
                let row = z.row_mut(i);
                for (v, &b) in row.iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            layer_inputs.push(current);
            if l + 1 < self.layers.len() {
                for v in z.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            current = z;
        }
        self.apply_head(&mut current);
        Ok(ForwardTrace {
            layer_inputs,
            output: current,
        })
    }

    fn apply_head(&self, z: &mut Mat) {
        match self.head {
            HeadMode::Linear => {}
            HeadMode::SoftmaxPerGroup { group_size } => {
                for i in 0..z.rows() {
                    for chunk in z.row_mut(i).chunks_mut(group_size) {
                        let max = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let mut total = 0.0;
                        for v in chunk.iter_mut() {
                            *v = (*v - max).exp();
                            total += *v;
                        }
                        for v in chunk.iter_mut() {
                            *v /= total;
                        }
                    }
                }
            }
        }
    }

    /// Reverse-mode pass: maps the gradient of a scalar loss with respect to
    /// the traced outputs into gradients for every parameter.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Mat) -> Result<Gradients> {
        if upstream.rows() != trace.output.rows() || upstream.cols() != trace.output.cols() {
            return Err(Error::Shape(format!(
                "upstream gradient is {}x{}, traced output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                trace.output.rows(),
                trace.output.cols()
            )));
        }
        let mut g = self.head_backward(&trace.output, upstream);
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let inputs = &trace.layer_inputs[l];
            let weight_grad = g.matmul_transpose_a(inputs);
            let bias_grad = g.col_sums();
            grads.push(LayerGrads {
                weight: weight_grad,
                bias: bias_grad,
            });
            if l > 0 {
                let mut prev = g.matmul(&layer.weight);
                // ReLU mask: the stored layer input is the post-ReLU value of
                // the previous layer, so positive entries mark active units.
                for i in 0..prev.rows() {
                    let mask = inputs.row(i);
                    for (v, &m) in prev.row_mut(i).iter_mut().zip(mask) {
                        if m <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                g = prev;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    fn head_backward(&self, output: &Mat, upstream: &Mat) -> Mat {
        match self.head {
            HeadMode::Linear => upstream.clone(),
            HeadMode::SoftmaxPerGroup { group_size } => {
                let mut g = Mat::zeros(upstream.rows(), upstream.cols());
                for i in 0..upstream.rows() {
                    let out_row = output.row(i);
                    let up_row = upstream.row(i);
                    let g_row = g.row_mut(i);
                    for start in (0..out_row.len()).step_by(group_size) {
                        let s = &out_row[start..start + group_size];
                        let u = &up_row[start..start + group_size];
                        let inner: f64 = s.iter().zip(u).map(|(&si, &ui)| si * ui).sum();
                        for j in 0..group_size {
                            g_row[start + j] = s[j] * (u[j] - inner);
                        }
                    }
                }
                g
            }
        }
    }

    /// Applies one warm-started power-iteration normalization to every layer
    /// marked for spectral normalization.
    pub fn spectral_normalize_marked(&mut self, iterations: usize) {
        for &l in &self.spectral_layers.clone() {
            spectral::spectral_normalize(&mut self.layers[l], iterations);
        }
    }

    /// Flat parameter vector: per layer, weights row-major then biases.
    pub fn param_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Restores parameters from [`Self::param_vector`] order.
    pub fn set_param_vector(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "parameter vector has length {}, network has {} parameters",
                params.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let w_len = l.fan_out() * l.fan_in();
            l.weight.data_mut().copy_from_slice(&params[offset..offset + w_len]);
            offset += w_len;
            let b_len = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + b_len]);
            offset += b_len;
        }
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }
}
