//! Per-iteration run records and communication accounting.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::sq_dist;
use crate::privacy::PrivacyLedger;
use crate::problem::{DataShard, Problem};

/// State of a run after `t` iterations (synchronous) or `t` events
/// (asynchronous). Row 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    /// Poisson-clock time in asynchronous runs; equals `t` otherwise.
    pub virtual_time: f64,
    /// Mean over workers of the full-shard loss.
    pub mean_loss: f64,
    pub worker_losses: Vec<f64>,
    /// Mean squared distance of the workers to `w*`, when it is known.
    pub d_t: Option<f64>,
    pub vectors_cum: u64,
    pub scalars_cum: u64,
    /// Largest spent `ε` over the workers, for private runs.
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: String,
    pub workers: usize,
    pub follower_count: usize,
    pub tau: u64,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub initial_params: Vec<Vec<f64>>,
    pub final_params: Vec<Vec<f64>>,
    /// Gradient steps taken by each worker.
    pub step_counts: Vec<u64>,
    /// One ledger per worker for private runs.
    pub ledgers: Vec<PrivacyLedger>,
}

impl RunTrace {
    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("a trace always holds the initial row")
    }

    /// Row recorded after iteration `t`, if any.
    pub fn row_at(&self, t: u64) -> Option<&TraceRow> {
        self.rows.get(t as usize).filter(|r| r.t == t)
    }

    /// Transitions during which at least one vector was sent.
    pub fn comm_rounds(&self) -> u64 {
        self.rows
            .windows(2)
            .filter(|w| w[1].vectors_cum > w[0].vectors_cum)
            .count() as u64
    }

    pub fn iterations(&self) -> u64 {
        self.last().t
    }
}

/// Communication counters of one trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommReport {
    pub vectors_per_comm_round: f64,
    pub mean_vectors_per_iteration: f64,
    /// `1 − (vectors per round) / (baseline vectors per round)`.
    pub reduction_vs_dpsgd: Option<f64>,
}

fn per_round(trace: &RunTrace) -> f64 {
    let rounds = trace.comm_rounds();
    if rounds == 0 {
        0.0
    } else {
        trace.last().vectors_cum as f64 / rounds as f64
    }
}

/// Vectors per communication round and per iteration, optionally relative
/// to a D-PSGD trace with the same number of workers.
pub fn comm_accounting(trace: &RunTrace, dpsgd: Option<&RunTrace>) -> Result<CommReport> {
    let iterations = trace.iterations();
    let mean_vectors_per_iteration = if iterations == 0 {
        0.0
    } else {
        trace.last().vectors_cum as f64 / iterations as f64
    };
    let reduction_vs_dpsgd = match dpsgd {
        None => None,
        Some(base) => {
            if base.workers != trace.workers {
                return Err(Error::DimensionMismatch {
                    expected: trace.workers,
                    actual: base.workers,
                });
            }
            let base_round = per_round(base);
            if base_round == 0.0 {
                return Err(invalid("dpsgd", "baseline trace transmitted nothing"));
            }
            Some(1.0 - per_round(trace) / base_round)
        }
    };
    Ok(CommReport {
        vectors_per_comm_round: per_round(trace),
        mean_vectors_per_iteration,
        reduction_vs_dpsgd,
    })
}

/// Incremental row builder: caches each worker's loss and distance so that
/// an event touching one worker re-evaluates only that worker.
pub(crate) struct Recorder<'a> {
    problem: &'a Problem,
    shards: &'a [DataShard],
    losses: Vec<f64>,
    dists: Vec<f64>,
    pub rows: Vec<TraceRow>,
    pub vectors: u64,
    pub scalars: u64,
}

impl<'a> Recorder<'a> {
    pub fn new(problem: &'a Problem, shards: &'a [DataShard]) -> Self {
        let m = shards.len();
        Self {
            problem,
            shards,
            losses: alloc::vec![0.0; m],
            dists: alloc::vec![0.0; m],
            rows: Vec::new(),
            vectors: 0,
            scalars: 0,
        }
    }

    pub fn refresh(&mut self, worker: usize, w: &[f64], t: u64) -> Result<()> {
        let loss = self.problem.full_loss(w, &self.shards[worker])?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                iteration: t,
                worker,
            });
        }
        self.losses[worker] = loss;
        if let Some(opt) = self.problem.optimum() {
            self.dists[worker] = sq_dist(w, opt);
        }
        Ok(())
    }

    pub fn refresh_all<'w>(&mut self, ws: impl Iterator<Item = &'w [f64]>, t: u64) -> Result<()> {
        for (i, w) in ws.enumerate() {
            self.refresh(i, w, t)?;
        }
        Ok(())
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn push(&mut self, t: u64, virtual_time: f64, ledgers: &[PrivacyLedger], delta: f64) -> Result<()> {
        let m = self.losses.len() as f64;
        let epsilon = if ledgers.is_empty() || ledgers.iter().all(|l| l.steps() == 0) {
            None
        } else {
            let mut worst: f64 = 0.0;
            for l in ledgers.iter().filter(|l| l.steps() > 0) {
                worst = worst.max(l.spent_epsilon(delta)?);
            }
            Some(worst)
        };
        self.rows.push(TraceRow {
            t,
            virtual_time,
            mean_loss: self.losses.iter().sum::<f64>() / m,
            worker_losses: self.losses.clone(),
            d_t: self.problem.optimum().map(|_| self.dists.iter().sum::<f64>() / m),
            vectors_cum: self.vectors,
            scalars_cum: self.scalars,
            epsilon,
        });
        Ok(())
    }
}
