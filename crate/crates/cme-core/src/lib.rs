//! Conditional mean embeddings with neural-network weight models.
//!
//! The crate estimates conditional distributions `P(Y|X)` by embedding them
//! into a reproducing kernel Hilbert space: an embedding is a weighted sum of
//! Gaussian density kernels anchored at a fixed grid of output locations, and
//! a small multilayer perceptron maps each input to the weight vector. Because
//! the kernel is simultaneously reproducing and smoothing, the same object
//! serves as an RKHS element and as an (unnormalized) conditional density.
//!
//! Modules:
//!
//! - [`net`]: dense networks with hand-rolled reverse-mode gradients, AdamW,
//!   and spectral normalization.
//! - [`kernels`]: the Gaussian density kernel and bandwidth heuristics.
//! - [`estimator`]: embedding training (joint, iterative, and fixed-bandwidth
//!   strategies) plus kernel herding for sampling.
//! - [`baselines`]: deep-feature ridge regression and the classical
//!   Gram-inversion estimator.
//! - [`data`]: synthetic conditional-density families and dataset plumbing.
//! - [`metrics`]: Wasserstein-1, quantile coverage, RMSE, and squared MMD.
//! - [`env`]: deterministic classic-control environments.
//! - [`agent`]: distributional Q-learning over embedded return distributions.
//!
//! The crate is `no_std`-compatible (with `alloc`); the default `std` feature
//! only switches float intrinsics and enables `std::error::Error`.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod agent;
pub mod baselines;
pub mod data;
pub mod env;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod net;
pub mod numdiff;

pub use error::{Error, Result};
pub use matrix::Mat;
