//! Spectral normalization via warm-started power iteration.

use alloc::vec;

#[cfg(not(feature = "std"))]
use crate::math::FloatExt;
use crate::net::DenseLayer;

/// Result of one normalization call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralOutcome {
    /// Power-iteration estimate of the largest singular value before scaling.
    pub estimated_norm: f64,
    /// Set when the weight matrix was (numerically) zero and left unchanged.
    pub skipped_zero: bool,
}

/// Rescales `layer.weight` to unit spectral norm using `iterations` rounds of
/// power iteration. The left singular vector estimate persists on the layer,
/// so one iteration per optimizer step suffices during training (warm start).
/// A zero matrix is returned unchanged with `skipped_zero` set.
pub fn spectral_normalize(layer: &mut DenseLayer, iterations: usize) -> SpectralOutcome {
    let w = &layer.weight;
    let (rows, cols) = (w.rows(), w.cols());
    let frobenius_sq: f64 = w.iter().map(|x| x * x).sum();
    if frobenius_sq <= f64::MIN_POSITIVE * (rows * cols) as f64 {
        return SpectralOutcome {
            estimated_norm: 0.0,
            skipped_zero: true,
        };
    }

    let mut u = layer
        .power_vector
        .take()
        .filter(|u| u.len() == rows)
        .unwrap_or_else(|| {
            let mut v = vec![0.0; rows];
            v[0] = 1.0;
            v
        });

    let mut estimate = 0.0;
    let mut v = vec![0.0; cols];
    for _ in 0..iterations.max(1) {
        // v <- normalize(Wᵀ u), u <- normalize(W v), estimate = uᵀ W v.
        let wt_u = layer.weight.matvec_transpose(&u);
        let n = norm(&wt_u);
        if n <= f64::MIN_POSITIVE {
            // u is orthogonal to the row space; restart from a basis vector.
            u.iter_mut().for_each(|x| *x = 0.0);
            u[0] = 1.0;
            continue;
        }
        for (vi, &x) in v.iter_mut().zip(&wt_u) {
            *vi = x / n;
        }
        let w_v = layer.weight.matvec(&v);
        let n = norm(&w_v);
        estimate = n;
        if n > f64::MIN_POSITIVE {
            for (ui, &x) in u.iter_mut().zip(&w_v) {
                *ui = x / n;
            }
        }
    }
    layer.power_vector = Some(u);

    if estimate > f64::MIN_POSITIVE {
        layer.weight.scale_in_place(1.0 / estimate);
    }
    SpectralOutcome {
        estimated_norm: estimate,
        skipped_zero: false,
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
