//! Constants and convergence bound of the leader/follower analysis, bound
//! checks against measured distances, and the asymptotic rate comparison
//! with D-PSGD.
//!
//! For a subsystem of `p` leaders and one follower the bound reads
//!
//! ```text
//! d_t ≤ hᵗ d₀ + (c₀ − η²σ₁²/γ)(1−γ)ᵗ(1 − (p/(p+1))ᵗ) + η²σ₁²(1 − hᵗ)/γ
//! ```
//!
//! with `γ = 2ημL/(μ+L)` and `h = p(1−γ)/(p+1)`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{log, mean_stderr, pow, sq_dist};
use crate::optimizer::HyperParams;
use crate::problem::Problem;
use crate::trace::RunTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub eta: f64,
    pub rho: f64,
    pub alpha: f64,
    /// Leaders per subsystem.
    pub p: usize,
    pub beta: f64,
    pub gamma: f64,
    pub h: f64,
    /// Bound constant `(1−γ)/(p+1)`; not the recategorization multiplier.
    pub k_const: f64,
    pub sigma1_sq: f64,
    /// Largest initial squared distance to `w*`.
    pub c0: f64,
    /// Mean initial squared distance to `w*`.
    pub d0: f64,
    pub mu: f64,
    pub lipschitz: f64,
}

/// Derive the bound constants, rejecting configurations outside the
/// analysis (`α < 1`, `β = pα < 1`, `η ≤ 2(1−β)/(μ+L)`).
pub fn derive_theory_params(
    problem: &Problem,
    hp: &HyperParams,
    p: usize,
    sigma1_sq: f64,
    initial_ws: &[Vec<f64>],
) -> Result<TheoryParams> {
    let (mu, lipschitz) = problem.strong_convexity()?;
    let w_star = problem.optimum().ok_or(Error::MissingOptimum)?;
    if p == 0 {
        return Err(invalid("p", "a subsystem needs at least one leader"));
    }
    if !(sigma1_sq >= 0.0 && sigma1_sq.is_finite()) {
        return Err(invalid("sigma1_sq", "must be finite and non-negative"));
    }
    if !(hp.eta > 0.0 && hp.eta.is_finite()) {
        return Err(invalid("eta", "must be positive and finite"));
    }
    if initial_ws.is_empty() {
        return Err(invalid("initial_ws", "need at least one initial vector"));
    }
    let alpha = hp.alpha();
    let beta = p as f64 * alpha;
    if alpha >= 1.0 {
        return Err(Error::Precondition {
            condition: "alpha < 1",
            detail: alloc::format!("alpha = {alpha}"),
        });
    }
    if beta >= 1.0 {
        return Err(Error::Precondition {
            condition: "beta < 1",
            detail: alloc::format!("beta = p*alpha = {beta}"),
        });
    }
    let limit = HyperParams::step_limit(mu, lipschitz, beta);
    if hp.eta > limit {
        return Err(Error::Precondition {
            condition: "eta <= 2(1-beta)/(mu+L)",
            detail: alloc::format!("eta = {} exceeds {limit}", hp.eta),
        });
    }
    let mut c0: f64 = 0.0;
    let mut total = 0.0;
    for w in initial_ws {
        if w.len() != w_star.len() {
            return Err(Error::DimensionMismatch {
                expected: w_star.len(),
                actual: w.len(),
            });
        }
        let d = sq_dist(w, w_star);
        c0 = c0.max(d);
        total += d;
    }
    let gamma = 2.0 * hp.eta * mu * lipschitz / (mu + lipschitz);
    let pf = p as f64;
    Ok(TheoryParams {
        eta: hp.eta,
        rho: hp.rho,
        alpha,
        p,
        beta,
        gamma,
        h: pf * (1.0 - gamma) / (pf + 1.0),
        k_const: (1.0 - gamma) / (pf + 1.0),
        sigma1_sq,
        c0,
        d0: total / initial_ws.len() as f64,
        mu,
        lipschitz,
    })
}

/// Leaders per subsystem for a whole system: `(m − L_f)/L_f`, rounded.
pub fn subsystem_p(workers: usize, follower_count: usize) -> Result<usize> {
    if follower_count == 0 || follower_count >= workers {
        return Err(invalid("follower_count", "must lie in 1..workers"));
    }
    let p = (workers - follower_count) as f64 / follower_count as f64;
    Ok((p + 0.5) as usize)
}

impl TheoryParams {
    /// The same constants with the gradient-noise variance raised by the
    /// privacy noise, `σ₁² + C²σ₂²`.
    pub fn with_privacy(&self, clip: f64, sigma2: f64) -> Self {
        Self {
            sigma1_sq: self.sigma1_sq + clip * clip * sigma2 * sigma2,
            ..*self
        }
    }

    /// Asymptotic level `η²σ₁²/γ`.
    pub fn noise_floor(&self) -> f64 {
        self.eta * self.eta * self.sigma1_sq / self.gamma
    }

    /// The three summands of the bound at iteration `t`.
    pub fn bound_terms(&self, t: u64) -> [f64; 3] {
        let tf = t as f64;
        let ht = pow(self.h, tf);
        let floor = self.noise_floor();
        let pf = self.p as f64;
        [
            ht * self.d0,
            (self.c0 - floor) * pow(1.0 - self.gamma, tf) * (1.0 - pow(pf / (pf + 1.0), tf)),
            floor * (1.0 - ht),
        ]
    }

    pub fn bound(&self, t: u64) -> f64 {
        self.bound_terms(t).iter().sum()
    }
}

pub fn proposition1_bound(tp: &TheoryParams, t: u64) -> f64 {
    tp.bound(t)
}

/// Extra asymptotic error from privacy noise, `η²C²σ₂²/γ`.
pub fn privacy_tradeoff_floor(tp: &TheoryParams, clip: f64, sigma2: f64) -> f64 {
    tp.eta * tp.eta * clip * clip * sigma2 * sigma2 / tp.gamma
}

/// Mean squared distance of a group of workers to `w*`.
pub fn subsystem_distance(ws: &[&[f64]], w_star: &[f64]) -> Result<f64> {
    if ws.is_empty() {
        return Err(invalid("ws", "need at least one worker"));
    }
    let mut total = 0.0;
    for w in ws {
        if w.len() != w_star.len() {
            return Err(Error::DimensionMismatch {
                expected: w_star.len(),
                actual: w.len(),
            });
        }
        total += sq_dist(w, w_star);
    }
    Ok(total / ws.len() as f64)
}

/// Seed-averaged `d_t` with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSeries {
    pub d: Vec<f64>,
    pub stderr: Vec<f64>,
    pub seeds_averaged: usize,
}

/// Average the per-row distances of an ensemble of traces.
pub fn measure_dt(traces: &[RunTrace]) -> Result<DistanceSeries> {
    let first = traces.first().ok_or(Error::EmptyEnsemble)?;
    let len = first.rows.len();
    if traces.iter().any(|t| t.rows.len() != len) {
        return Err(invalid("traces", "runs of different length"));
    }
    let mut d = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    let mut column = Vec::with_capacity(traces.len());
    for i in 0..len {
        column.clear();
        for tr in traces {
            column.push(tr.rows[i].d_t.ok_or(Error::MissingOptimum)?);
        }
        let (mean, se) = mean_stderr(&column);
        d.push(mean);
        stderr.push(se);
    }
    Ok(DistanceSeries {
        d,
        stderr,
        seeds_averaged: traces.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub pass: bool,
    pub slack: f64,
    pub first_violation_t: Option<u64>,
    /// Largest `d_t / bound(t)`.
    pub max_ratio_to_bound: f64,
    /// Mean of `d_{t+1}/d_t` over the last tenth of the series.
    pub empirical_ratio: Option<f64>,
    /// Largest `d_{t+1}/d_t` for `t ≥ 10`.
    pub max_step_ratio: Option<f64>,
    pub h: f64,
}

fn step_ratios(d: &[f64], from: usize) -> Vec<f64> {
    (from..d.len().saturating_sub(1))
        .filter(|&t| d[t] > 0.0)
        .map(|t| d[t + 1] / d[t])
        .collect()
}

/// Check `d_t ≤ (1 + slack)·bound(t)` at every recorded `t`.
pub fn check_bound_dominance(series: &DistanceSeries, tp: &TheoryParams, slack: f64) -> DominanceReport {
    let mut first_violation_t = None;
    let mut max_ratio: f64 = 0.0;
    for (t, &d) in series.d.iter().enumerate() {
        let b = tp.bound(t as u64);
        if b > 0.0 {
            max_ratio = max_ratio.max(d / b);
        }
        if first_violation_t.is_none() && d > (1.0 + slack) * b {
            first_violation_t = Some(t as u64);
        }
    }
    let tail_from = series.d.len() - series.d.len() / 10 - 1;
    let tail = step_ratios(&series.d, tail_from);
    let empirical_ratio = (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64);
    let max_step_ratio = step_ratios(&series.d, 10).into_iter().reduce(f64::max);
    DominanceReport {
        pass: first_violation_t.is_none(),
        slack,
        first_violation_t,
        max_ratio_to_bound: max_ratio,
        empirical_ratio,
        max_step_ratio,
        h: tp.h,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub t: u64,
    /// `hᵗ`
    pub leasgd: f64,
    /// `1/((p+1)t)`
    pub dpsgd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateComparison {
    pub h: f64,
    pub p: usize,
    pub rows: Vec<RateRow>,
    /// Smallest `t*` with `hᵗ < 1/((p+1)t)` for every `t ≥ t*`.
    pub crossover: u64,
}

/// `ln(hᵗ(p+1)t)`.
fn log_gap(h: f64, p: usize, t: u64) -> f64 {
    t as f64 * log(h) + log((p + 1) as f64) + log(t as f64)
}

/// Tabulate the two rates on `t_grid` and locate the permanent crossover.
///
/// `ln(hᵗ(p+1)t)` is concave in `t` and decreasing beyond `1/ln(1/h)`, so
/// the crossover is the first integer past that point where the gap drops
/// below zero, extended backwards over any earlier stretch that is also
/// below zero.
pub fn rate_comparison(h: f64, p: usize, t_grid: &[u64]) -> Result<RateComparison> {
    if !(h > 0.0 && h < 1.0) {
        return Err(invalid("h", "must lie in (0, 1)"));
    }
    if p == 0 {
        return Err(invalid("p", "must be at least 1"));
    }
    if t_grid.contains(&0) {
        return Err(invalid("t_grid", "the D-PSGD rate is undefined at t = 0"));
    }
    let peak = (1.0 / log(1.0 / h)).max(1.0);
    let start = peak as u64 + 1;
    let below = |t: u64| log_gap(h, p, t) < 0.0;
    let mut hi = start;
    while !below(hi) {
        hi = hi.checked_mul(2).ok_or_else(|| invalid("h", "crossover beyond u64"))?;
    }
    let mut lo = start.max(hi / 2);
    if below(lo) {
        hi = lo;
    } else {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if below(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let mut crossover = hi;
    while crossover > 1 && below(crossover - 1) {
        crossover -= 1;
    }
    let pf = (p + 1) as f64;
    let rows = t_grid
        .iter()
        .map(|&t| RateRow {
            t,
            leasgd: pow(h, t as f64),
            dpsgd: 1.0 / (pf * t as f64),
        })
        .collect();
    Ok(RateComparison { h, p, rows, crossover })
}
