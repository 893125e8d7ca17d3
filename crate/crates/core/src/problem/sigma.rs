use rand::Rng;

use super::{DataShard, Problem};
use crate::error::{invalid, Result};
use crate::math::sq_dist;

/// Multiplier applied to the empirical gradient-noise variance.
pub const SIGMA1_SAFETY_FACTOR: f64 = 1.2;

/// Empirical bound on `E‖g − ∇f‖²` for minibatches of `batch_size`.
///
/// At every point in `w_samples` the mean squared deviation of `trials`
/// stochastic gradients from the full-shard gradient is measured; the
/// largest is returned, scaled by [`SIGMA1_SAFETY_FACTOR`].
pub fn estimate_sigma1<R: Rng + ?Sized>(
    problem: &Problem,
    w_samples: &[&[f64]],
    shard: &DataShard,
    batch_size: usize,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if trials < 30 {
        return Err(invalid("trials", "at least 30 trials are needed"));
    }
    if w_samples.is_empty() {
        return Err(invalid("w_samples", "need at least one point"));
    }
    let mut worst: f64 = 0.0;
    for w in w_samples {
        let full = problem.full_gradient(w, shard)?;
        let mut total = 0.0;
        for _ in 0..trials {
            let g = problem.stochastic_gradient(w, shard, batch_size, rng)?;
            total += sq_dist(&g.gradient, &full);
        }
        worst = worst.max(total / trials as f64);
    }
    Ok(SIGMA1_SAFETY_FACTOR * worst)
}
