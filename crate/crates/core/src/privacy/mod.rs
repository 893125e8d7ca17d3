//! Gradient clipping, the Gaussian mechanism, and privacy accounting.

mod accountant;
mod quadrature;

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use accountant::{
    log_moment, per_step_epsilon, spent_epsilon, strong_composition_epsilon, AccountingMethod, LedgerReport,
    PrivacyLedger, MAX_MOMENT_ORDER,
};

use crate::error::{invalid, Result};
use crate::math::{log, norm, sqrt};

/// Default target `δ` when a configuration names none.
pub const DEFAULT_DELTA: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    /// Gradient-norm bound `C`.
    pub clip: f64,
    /// Noise multiplier `σ₂`; the per-coordinate noise deviation is `σ₂·C`.
    pub sigma2: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Batch size over shard size.
    #[serde(default = "default_q")]
    pub sampling_ratio: f64,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_q() -> f64 {
    1.0
}

impl PrivacyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(invalid("clip", "must be positive and finite"));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(invalid("sigma2", "must be finite and non-negative"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", "must lie in (0, 1)"));
        }
        if !(self.sampling_ratio > 0.0 && self.sampling_ratio <= 1.0) {
            return Err(invalid("sampling_ratio", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Per-coordinate standard deviation of the injected noise.
    pub fn noise_std(&self) -> f64 {
        self.sigma2 * self.clip
    }
}

/// `g / max(1, ‖g‖₂/C)`; the result never has norm above `C`.
pub fn clip_gradient(g: &[f64], clip: f64) -> Vec<f64> {
    let len = norm(g);
    if len <= clip {
        return g.to_vec();
    }
    let mut divisor = len / clip;
    loop {
        let out: Vec<f64> = g.iter().map(|x| x / divisor).collect();
        if norm(&out) <= clip {
            return out;
        }
        divisor *= 1.0 + f64::EPSILON;
    }
}

/// Clip, then add i.i.d. `N(0, σ₂²C²)` noise to every coordinate.
pub fn privatize_gradient<R: Rng + ?Sized>(g: &[f64], cfg: &PrivacyConfig, rng: &mut R) -> Vec<f64> {
    let mut out = clip_gradient(g, cfg.clip);
    if cfg.sigma2 != 0.0 {
        let std = cfg.noise_std();
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += std * z;
        }
    }
    out
}

/// Noise multiplier making one Gaussian step `(ε, δ)`-DP:
/// `√(2 ln(1.25/δ)) / ε`.
pub fn calibrate_sigma(epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon", "must be positive and finite"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", "must lie in (0, 1)"));
    }
    Ok(sqrt(2.0 * log(1.25 / delta)) / epsilon)
}

#[cfg(test)]
mod tests;
