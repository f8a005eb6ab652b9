//! Kernel herding: deterministic super-samples from an embedding.
//!
//! Sample `t + 1` maximizes `S(z) - (1/(t+1)) * sum_{j<=t} k(z, z_j)` over a
//! fixed candidate set, where `S(z) = sum_a w_a k(z, eta_a)` is the
//! embedding's witness function. The prior-sample sum is maintained
//! incrementally, so a full draw costs `O(candidates * (atoms + n))` kernel
//! evaluations.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::linspace;
use crate::{Error, Result};

use super::CMEmbedding;

pub const DEFAULT_HERDING_CANDIDATES: usize = 2048;

/// Default candidate set: equally spaced points covering every atom plus a
/// three-bandwidth margin on each side.
pub fn herding_candidates(emb: &CMEmbedding, count: usize) -> Vec<f64> {
    let lo = emb.atoms().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = emb
        .atoms()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = 3.0 * emb.kernel().sigma();
    linspace(lo - margin, hi + margin, count)
}

pub fn herd_samples(emb: &CMEmbedding, n: usize) -> Result<Vec<f64>> {
    let candidates = herding_candidates(emb, DEFAULT_HERDING_CANDIDATES);
    herd_samples_with_candidates(emb, n, &candidates)
}

/// Ties in the argmax resolve to the smallest candidate index.
pub fn herd_samples_with_candidates(
    emb: &CMEmbedding,
    n: usize,
    candidates: &[f64],
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("must herd at least one sample".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty herding candidate set".into()));
    }
    let kernel = emb.kernel();

    let witness: Vec<f64> = candidates.iter().map(|&z| emb.density_at(z)).collect();
    let mut prior_sum = vec![0.0; candidates.len()];
    let mut samples = Vec::with_capacity(n);

    for t in 0..n {
        let penalty = 1.0 / (t + 1) as f64;
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (c, (&w, &p)) in witness.iter().zip(&prior_sum).enumerate() {
            let score = w - penalty * p;
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        let z = candidates[best];
        samples.push(z);
        for (p, &c) in prior_sum.iter_mut().zip(candidates) {
            *p += kernel.eval_sq_dist((c - z) * (c - z));
        }
    }
    Ok(samples)
}
