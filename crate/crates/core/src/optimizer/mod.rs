//! Update rules and schedulers of leader/follower elastic averaging.
//!
//! A communication round moves every leader toward the follower it drew
//! and every follower toward the mean of the leaders that drew it; all
//! elastic terms use the parameter values from before the round.

mod schedule;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use schedule::{run_async, run_sync};

use crate::error::{invalid, Error, Result};
use crate::privacy::{privatize_gradient, PrivacyConfig, PrivacyLedger};
use crate::problem::{DataShard, Problem};
use crate::rng::WorkerStreams;
use crate::topology::{Pairing, Role, Roster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Learning rate `η`.
    pub eta: f64,
    /// Elastic factor `ρ`.
    #[serde(default)]
    pub rho: f64,
    /// Communication interval in iterations.
    #[serde(default = "one")]
    pub tau: u64,
    /// Recategorization every `kappa·tau` iterations.
    #[serde(default = "one")]
    pub kappa: u64,
    pub total_iterations: u64,
}

fn one() -> u64 {
    1
}

impl HyperParams {
    /// `α = ηρ`.
    pub fn alpha(&self) -> f64 {
        self.eta * self.rho
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", "must be positive and finite"));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(invalid("rho", "must be finite and non-negative"));
        }
        if self.tau == 0 {
            return Err(invalid("tau", "must be at least 1"));
        }
        if self.kappa == 0 {
            return Err(invalid("kappa", "must be at least 1"));
        }
        if self.total_iterations == 0 {
            return Err(invalid("total_iterations", "must be at least 1"));
        }
        if self.alpha() >= 1.0 {
            return Err(invalid(
                "rho",
                alloc::format!("alpha = eta*rho = {} must be below 1", self.alpha()),
            ));
        }
        Ok(())
    }

    /// Largest step size `2(1−β)/(μ+L)` allowed with aggregate pull `β`.
    pub fn step_limit(mu: f64, lipschitz: f64, beta: f64) -> f64 {
        2.0 * (1.0 - beta) / (mu + lipschitz)
    }
}

/// One simulated worker.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub worker_id: usize,
    pub w: Vec<f64>,
    pub role: Role,
    /// Full-shard loss at the latest recorded iteration.
    pub last_loss: f64,
    pub local_step_count: u64,
    pub streams: WorkerStreams,
}

impl WorkerState {
    pub fn new(worker_id: usize, w: Vec<f64>, streams: WorkerStreams) -> Self {
        Self {
            worker_id,
            w,
            role: Role::Leader,
            last_loss: f64::NAN,
            local_step_count: 0,
            streams,
        }
    }

    /// Minibatch gradient at the current parameters from the worker's data
    /// stream. Counts as one local step.
    pub fn draw_gradient(&mut self, problem: &Problem, shard: &DataShard, batch_size: usize) -> Result<Vec<f64>> {
        let g = problem
            .stochastic_gradient(&self.w, shard, batch_size, &mut self.streams.data)
            .map_err(|e| with_worker(e, self.worker_id, self.local_step_count))?;
        self.local_step_count += 1;
        Ok(g.gradient)
    }

    /// Clip and noise `g` with the worker's noise stream.
    pub fn privatize(&mut self, g: &[f64], cfg: &PrivacyConfig) -> Vec<f64> {
        privatize_gradient(g, cfg, &mut self.streams.noise)
    }
}

fn with_worker(e: Error, worker: usize, iteration: u64) -> Error {
    match e {
        Error::NonFinite { what, .. } => Error::NonFinite {
            what,
            iteration,
            worker,
        },
        other => other,
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `w ← w − ηg`.
pub(crate) fn sgd_update(w: &mut [f64], g: &[f64], eta: f64) {
    for (x, gi) in w.iter_mut().zip(g) {
        *x -= eta * gi;
    }
}

/// One local step: `w ← w − ηg`, with `g` privatized when `privacy` is set.
pub fn local_sgd_step(
    state: &mut WorkerState,
    problem: &Problem,
    shard: &DataShard,
    batch_size: usize,
    hp: &HyperParams,
    privacy: Option<&PrivacyConfig>,
) -> Result<()> {
    let mut g = state.draw_gradient(problem, shard, batch_size)?;
    if let Some(cfg) = privacy {
        g = state.privatize(&g, cfg);
    }
    sgd_update(&mut state.w, &g, hp.eta);
    Ok(())
}

/// Simultaneous pairwise elastic update:
/// `wⁱ ← wⁱ − ηgⁱ + α(wᶠ − wⁱ)`, `wᶠ ← wᶠ − ηgᶠ + α(wⁱ − wᶠ)`.
pub fn elastic_pair_update(
    leader: &mut WorkerState,
    follower: &mut WorkerState,
    g_leader: &[f64],
    g_follower: &[f64],
    hp: &HyperParams,
) -> Result<()> {
    let n = leader.w.len();
    check_dim(n, follower.w.len())?;
    check_dim(n, g_leader.len())?;
    check_dim(n, g_follower.len())?;
    let (eta, alpha) = (hp.eta, hp.alpha());
    for j in 0..n {
        let (wl, wf) = (leader.w[j], follower.w[j]);
        if alpha == 0.0 {
            leader.w[j] = wl - eta * g_leader[j];
            follower.w[j] = wf - eta * g_follower[j];
        } else {
            leader.w[j] = wl - eta * g_leader[j] - alpha * (wl - wf);
            follower.w[j] = wf - eta * g_follower[j] - alpha * (wf - wl);
        }
    }
    Ok(())
}

/// Aggregate pull of `p` leaders on one follower:
/// `wᶠ ← wᶠ − ηgᶠ − β(wᶠ − ȳ)` with `β = pα` and `ȳ` the leaders' mean.
pub fn follower_multi_pull(
    follower: &mut WorkerState,
    leader_ws: &[&[f64]],
    g_follower: &[f64],
    hp: &HyperParams,
) -> Result<()> {
    if leader_ws.is_empty() {
        return Err(invalid("leader_ws", "a pull needs at least one leader"));
    }
    let n = follower.w.len();
    check_dim(n, g_follower.len())?;
    for lw in leader_ws {
        check_dim(n, lw.len())?;
    }
    let p = leader_ws.len() as f64;
    let beta = p * hp.alpha();
    if beta >= 1.0 {
        return Err(Error::Precondition {
            condition: "beta < 1",
            detail: alloc::format!("{} leaders with alpha {} give beta {beta}", leader_ws.len(), hp.alpha()),
        });
    }
    for j in 0..n {
        let y = leader_ws.iter().map(|lw| lw[j]).sum::<f64>() / p;
        let wf = follower.w[j];
        follower.w[j] = if beta == 0.0 {
            wf - hp.eta * g_follower[j]
        } else {
            wf - hp.eta * g_follower[j] - beta * (wf - y)
        };
    }
    Ok(())
}

/// One communication round with already-drawn gradients. Leaders pull
/// toward their follower's pre-round value, followers toward the mean of
/// their leaders' pre-round values, and unpicked followers take a plain
/// step.
pub fn apply_round(
    states: &mut [WorkerState],
    roster: &Roster,
    pairing: &Pairing,
    gradients: &[Vec<f64>],
    hp: &HyperParams,
) -> Result<()> {
    check_dim(states.len(), roster.m())?;
    check_dim(states.len(), gradients.len())?;
    let snapshot: Vec<Vec<f64>> = states.iter().map(|s| s.w.clone()).collect();
    let (eta, alpha) = (hp.eta, hp.alpha());
    for (i, state) in states.iter_mut().enumerate() {
        let g = &gradients[i];
        check_dim(state.w.len(), g.len())?;
        match roster.role(i) {
            Role::Leader => {
                let wf = &snapshot[pairing.assignments[&i]];
                for j in 0..state.w.len() {
                    let wl = state.w[j];
                    state.w[j] = if alpha == 0.0 {
                        wl - eta * g[j]
                    } else {
                        wl - eta * g[j] - alpha * (wl - wf[j])
                    };
                }
            }
            Role::Follower => {
                let leaders = pairing.leaders_of(i);
                if leaders.is_empty() {
                    sgd_update(&mut state.w, g, eta);
                } else {
                    let lws: Vec<&[f64]> = leaders.iter().map(|&l| snapshot[l].as_slice()).collect();
                    follower_multi_pull(state, &lws, g, hp)?;
                }
            }
        }
    }
    Ok(())
}

/// [`apply_round`] with every gradient privatized first and one step
/// charged to each worker's ledger. Elastic terms are not noised.
pub fn private_update(
    states: &mut [WorkerState],
    roster: &Roster,
    pairing: &Pairing,
    gradients: &[Vec<f64>],
    hp: &HyperParams,
    cfg: &PrivacyConfig,
    ledgers: &mut [PrivacyLedger],
) -> Result<()> {
    check_dim(states.len(), ledgers.len())?;
    check_dim(states.len(), gradients.len())?;
    let noisy: Vec<Vec<f64>> = states
        .iter_mut()
        .zip(gradients)
        .zip(ledgers.iter_mut())
        .map(|((s, g), l)| {
            l.account_step();
            s.privatize(g, cfg)
        })
        .collect();
    apply_round(states, roster, pairing, &noisy, hp)
}
