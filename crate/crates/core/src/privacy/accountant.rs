//! Privacy-budget accounting for the subsampled Gaussian mechanism.
//!
//! The moments accountant tracks, for every integer order `λ ∈ 1..=64`, the
//! log moment generating function of the privacy loss and converts it into
//! `ε(δ) = min_λ (α(λ) + ln(1/δ)) / λ`. Strong composition is kept as the
//! classical reference bound.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::quadrature::log_integral;
use super::PrivacyConfig;
use crate::error::{invalid, Error, Result};
use crate::math::{exp, expm1, log, log1p, sqrt};

/// Largest moment order tracked.
pub const MAX_MOMENT_ORDER: usize = 64;

const QUADRATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountingMethod {
    Moments,
    StrongComposition,
}

/// `ln(μ(z)/μ₀(z))` for the mixture `μ = (1−q)·N(0,σ²) + q·N(1,σ²)`.
fn log_ratio(z: f64, q: f64, sigma: f64) -> f64 {
    let x = (2.0 * z - 1.0) / (2.0 * sigma * sigma);
    if x > 30.0 {
        log(q) + x + log1p((1.0 - q) / q * exp(-x))
    } else {
        log1p(q * expm1(x))
    }
}

/// Log moment `α(λ)` of one subsampled Gaussian step with noise multiplier
/// `sigma` and sampling ratio `q`.
///
/// Closed form `λ(λ+1)/(2σ²)` at `q = 1`; otherwise both tails
/// `E_{μ₀}[(μ₀/μ)^λ]` and `E_μ[(μ/μ₀)^λ]` are integrated numerically and the
/// larger is kept.
pub fn log_moment(q: f64, sigma: f64, order: usize) -> f64 {
    let lambda = order as f64;
    if q >= 1.0 {
        return lambda * (lambda + 1.0) / (2.0 * sigma * sigma);
    }
    let log_norm = log(sigma * sqrt(2.0 * core::f64::consts::PI));
    let log_base = |z: f64| -z * z / (2.0 * sigma * sigma) - log_norm;
    let lo = -40.0 * sigma - 2.0;
    let hi = lambda + 2.0 + 40.0 * sigma;
    let panel = sigma / 4.0;
    // E_μ[(μ/μ₀)^λ] = E_{μ₀}[(μ/μ₀)^{λ+1}]
    let upper = log_integral(
        |z| log_base(z) + (lambda + 1.0) * log_ratio(z, q, sigma),
        lo,
        hi,
        panel,
        QUADRATURE_TOL,
    );
    let lower = log_integral(
        |z| log_base(z) - lambda * log_ratio(z, q, sigma),
        lo,
        hi,
        panel,
        QUADRATURE_TOL,
    );
    upper.max(lower)
}

/// Accumulated privacy loss of one worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    sigma2: f64,
    sampling_ratio: f64,
    method: AccountingMethod,
    steps: u64,
    /// Log moment of a single step, indexed by `λ − 1`.
    step_moments: Vec<f64>,
    non_private: bool,
}

impl PrivacyLedger {
    pub fn new(cfg: &PrivacyConfig, method: AccountingMethod) -> Result<Self> {
        cfg.validate()?;
        let non_private = cfg.sigma2 == 0.0;
        let step_moments = (1..=MAX_MOMENT_ORDER)
            .map(|l| {
                if non_private {
                    f64::INFINITY
                } else {
                    log_moment(cfg.sampling_ratio, cfg.sigma2, l)
                }
            })
            .collect();
        Ok(Self {
            sigma2: cfg.sigma2,
            sampling_ratio: cfg.sampling_ratio,
            method,
            steps: 0,
            step_moments,
            non_private,
        })
    }

    /// Record one invocation of the mechanism.
    pub fn account_step(&mut self) {
        self.steps += 1;
    }

    pub fn account_steps(&mut self, n: u64) {
        self.steps += n;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sampling_ratio(&self) -> f64 {
        self.sampling_ratio
    }

    pub fn method(&self) -> AccountingMethod {
        self.method
    }

    /// `σ₂ = 0`: no finite budget exists.
    pub fn is_private(&self) -> bool {
        !self.non_private
    }

    /// Accumulated log moment for order `λ` (`1..=64`).
    pub fn log_moment(&self, order: usize) -> f64 {
        self.steps as f64 * self.step_moments[order - 1]
    }

    /// Tail bound `min_λ (α(λ) + ln(1/δ))/λ` and its minimizing order.
    pub fn moments_epsilon(&self, delta: f64) -> Result<(f64, usize)> {
        check_delta(delta)?;
        if self.steps == 0 {
            return Err(Error::EmptyLedger);
        }
        if self.non_private {
            return Ok((f64::INFINITY, 1));
        }
        let log_inv_delta = -log(delta);
        let mut best = (f64::INFINITY, 1);
        for order in 1..=MAX_MOMENT_ORDER {
            let eps = (self.log_moment(order) + log_inv_delta) / order as f64;
            if eps < best.0 {
                best = (eps, order);
            }
        }
        Ok(best)
    }

    /// Advanced composition over the recorded steps. The total `δ` is split
    /// evenly between the per-step failures and the composition slack; for
    /// `q < 1` each step is first amplified by subsampling.
    pub fn strong_composition_epsilon(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        if self.steps == 0 {
            return Err(Error::EmptyLedger);
        }
        if self.non_private {
            return Ok(f64::INFINITY);
        }
        let t = self.steps as f64;
        let q = self.sampling_ratio;
        let slack = delta / 2.0;
        let delta0 = slack / (t * q);
        let eps_full = per_step_epsilon(self.sigma2, delta0)?;
        let eps0 = log1p(q * expm1(eps_full));
        Ok(strong_composition_epsilon(eps0, q * delta0, self.steps, slack)?.0)
    }

    /// Spent `ε` at `delta` by this ledger's method.
    pub fn spent_epsilon(&self, delta: f64) -> Result<f64> {
        match self.method {
            AccountingMethod::Moments => Ok(self.moments_epsilon(delta)?.0),
            AccountingMethod::StrongComposition => self.strong_composition_epsilon(delta),
        }
    }

    pub fn report(&self, delta: f64) -> Result<LedgerReport> {
        Ok(LedgerReport {
            steps: self.steps,
            sigma2: self.sigma2,
            q: self.sampling_ratio,
            delta,
            epsilon_moments: self.moments_epsilon(delta)?.0,
            epsilon_strong_composition: self.strong_composition_epsilon(delta)?,
        })
    }
}

/// Spent `ε` of `ledger` at `delta`.
pub fn spent_epsilon(ledger: &PrivacyLedger, delta: f64) -> Result<f64> {
    ledger.spent_epsilon(delta)
}

/// Serialized ledger summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub steps: u64,
    pub sigma2: f64,
    pub q: f64,
    pub delta: f64,
    pub epsilon_moments: f64,
    pub epsilon_strong_composition: f64,
}

impl LedgerReport {
    /// Recompute both budgets from `(steps, σ₂, q, δ)` alone.
    pub fn recompute(&self) -> Result<LedgerReport> {
        let cfg = PrivacyConfig {
            clip: 1.0,
            sigma2: self.sigma2,
            delta: self.delta,
            sampling_ratio: self.q,
        };
        let mut ledger = PrivacyLedger::new(&cfg, AccountingMethod::Moments)?;
        ledger.account_steps(self.steps);
        ledger.report(self.delta)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", "must lie in (0, 1)"));
    }
    Ok(())
}

/// Per-step `ε₀` of the Gaussian mechanism with multiplier `sigma2` at `δ₀`
/// (the inverse of [`super::calibrate_sigma`]).
pub fn per_step_epsilon(sigma2: f64, delta0: f64) -> Result<f64> {
    check_delta(delta0)?;
    if sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(invalid("sigma2", "must be positive"));
    }
    Ok(sqrt(2.0 * log(1.25 / delta0)) / sigma2)
}

/// `(ε₀√(2T ln(1/δ')) + T ε₀ (e^{ε₀} − 1),  T δ₀ + δ')`.
pub fn strong_composition_epsilon(eps0: f64, delta0: f64, steps: u64, delta_slack: f64) -> Result<(f64, f64)> {
    if !(eps0 >= 0.0 && eps0.is_finite()) {
        return Err(invalid("eps0", "must be finite and non-negative"));
    }
    if !(0.0..1.0).contains(&delta0) {
        return Err(invalid("delta0", "must lie in [0, 1)"));
    }
    if steps == 0 {
        return Err(invalid("steps", "must be at least 1"));
    }
    if !(delta_slack > 0.0 && delta_slack < 1.0) {
        return Err(invalid("delta_slack", "must lie in (0, 1)"));
    }
    let t = steps as f64;
    let eps = eps0 * sqrt(2.0 * t * log(1.0 / delta_slack)) + t * eps0 * expm1(eps0);
    Ok((eps, t * delta0 + delta_slack))
}
