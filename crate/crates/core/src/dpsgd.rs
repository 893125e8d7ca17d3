//! Decentralized parallel SGD on a ring, the communication baseline.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::cos;
use crate::optimizer::{sgd_update, WorkerState};
use crate::problem::{DataShard, Problem};
use crate::sim::{RunSetup, SimConfig};
use crate::trace::RunTrace;

/// Symmetric doubly-stochastic gossip weights, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingMatrix {
    m: usize,
    weights: Vec<f64>,
}

impl MixingMatrix {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.m..(i + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// Largest deviation of a row or column sum from 1.
    pub fn stochasticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.m {
            let row: f64 = (0..self.m).map(|j| self.get(i, j)).sum();
            let col: f64 = (0..self.m).map(|j| self.get(j, i)).sum();
            worst = worst.max((row - 1.0).abs()).max((col - 1.0).abs());
        }
        worst
    }

    /// Second-largest eigenvalue modulus of the uniform ring, from the
    /// circulant spectrum `1/3 + (2/3)cos(2πk/m)`.
    pub fn ring_slem(&self) -> f64 {
        (1..self.m)
            .map(|k| (1.0 / 3.0 + 2.0 / 3.0 * cos(2.0 * core::f64::consts::PI * k as f64 / self.m as f64)).abs())
            .fold(0.0, f64::max)
    }

    /// `Σⱼ W_ij wʲ` for every `i`.
    pub fn mix(&self, ws: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if ws.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                actual: ws.len(),
            });
        }
        let n = ws.first().map_or(0, |w| w.len());
        let mut out = Vec::with_capacity(self.m);
        for i in 0..self.m {
            let mut acc = alloc::vec![0.0; n];
            for (j, w) in ws.iter().enumerate() {
                let c = self.get(i, j);
                if c != 0.0 {
                    if w.len() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            actual: w.len(),
                        });
                    }
                    for (a, x) in acc.iter_mut().zip(w.iter()) {
                        *a += c * x;
                    }
                }
            }
            out.push(acc);
        }
        Ok(out)
    }
}

/// Weight 1/3 on each worker and its two ring neighbours.
pub fn ring_mixing_matrix(m: usize) -> Result<MixingMatrix> {
    if m < 3 {
        return Err(invalid("workers", "a ring needs at least 3 workers"));
    }
    let mut weights = alloc::vec![0.0; m * m];
    let third = 1.0 / 3.0;
    for i in 0..m {
        weights[i * m + i] = third;
        weights[i * m + (i + 1) % m] = third;
        weights[i * m + (i + m - 1) % m] = third;
    }
    Ok(MixingMatrix { m, weights })
}

/// Identity weights (no gossip).
pub fn identity_mixing_matrix(m: usize) -> MixingMatrix {
    let mut weights = alloc::vec![0.0; m * m];
    for i in 0..m {
        weights[i * m + i] = 1.0;
    }
    MixingMatrix { m, weights }
}

/// `wⁱ ← Σⱼ W_ij wʲ − ηgⁱ` simultaneously; `gradients` are taken at the
/// pre-mixing parameters.
pub fn dpsgd_step(states: &mut [WorkerState], w: &MixingMatrix, gradients: &[Vec<f64>], eta: f64) -> Result<()> {
    if gradients.len() != states.len() {
        return Err(Error::DimensionMismatch {
            expected: states.len(),
            actual: gradients.len(),
        });
    }
    let mixed = {
        let views: Vec<&[f64]> = states.iter().map(|s| s.w.as_slice()).collect();
        w.mix(&views)?
    };
    for ((s, mut new), g) in states.iter_mut().zip(mixed).zip(gradients) {
        if g.len() != new.len() {
            return Err(Error::DimensionMismatch {
                expected: new.len(),
                actual: g.len(),
            });
        }
        sgd_update(&mut new, g, eta);
        s.w = new;
    }
    Ok(())
}

/// Vectors sent per round: every worker sends to both neighbours.
pub fn dpsgd_comm_cost(m: usize) -> u64 {
    2 * m as u64
}

/// D-PSGD for `T` iterations with gradients privatized exactly as in the
/// elastic runs.
pub fn run_dpsgd(problem: &Problem, shards: &[DataShard], cfg: &SimConfig, seed: u64) -> Result<RunTrace> {
    let mixing = ring_mixing_matrix(cfg.workers)?;
    let mut run = RunSetup::new(problem, shards, cfg, seed)?;
    for t in 0..cfg.hyper.total_iterations {
        let grads = run.gradients(problem, shards, cfg)?;
        dpsgd_step(&mut run.states, &mixing, &grads, cfg.hyper.eta)?;
        run.recorder.vectors += dpsgd_comm_cost(cfg.workers);
        run.record(t + 1, (t + 1) as f64)?;
    }
    Ok(run.finish(cfg, seed))
}
