//! One run per seed, plus ensemble statistics.

use leasgd_core::math::mean_stderr;
use leasgd_core::trace::{comm_accounting, CommReport};
use leasgd_core::{simulate, Error as CoreError, RunTrace};
use serde::{Deserialize, Serialize};

use crate::config::Prepared;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, stderr) = mean_stderr(xs);
        Self { mean, stderr }
    }
}

/// Holdout accuracy of each worker's final model, aggregated per run and
/// then across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub mean_over_workers: Stat,
    pub max_over_workers: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: String,
    pub workers: usize,
    pub follower_count: usize,
    pub iterations: u64,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub final_mean_loss: Stat,
    pub final_d_t: Option<Stat>,
    pub accuracy: Option<AccuracySummary>,
    pub vectors_total: Stat,
    pub scalars_total: Stat,
    /// Counters of the first run.
    pub comm: CommReport,
    /// Largest spent ε over runs and workers.
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub traces: Vec<RunTrace>,
    pub summary: Summary,
}

/// Ensemble mean of `mean_loss` and `vectors_cum` at each trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: u64,
    pub vectors_cum: f64,
    pub mean_loss: f64,
    pub stderr: f64,
}

pub fn run_experiment(prepared: &Prepared) -> Result<Experiment> {
    let traces =
        prepared
            .seeds
            .iter()
            .enumerate()
            .map(|(run, &seed)| {
                simulate(&prepared.problem, &prepared.shards, &prepared.config.sim, seed)
                    .map_err(|source| SimError::Run { run, seed, source })
            })
            .collect::<Result<Vec<_>>>()?;
    let summary = summarize(prepared, &traces)?;
    Ok(Experiment { traces, summary })
}

pub fn summarize(prepared: &Prepared, traces: &[RunTrace]) -> Result<Summary> {
    let first = traces.first().ok_or(SimError::Analysis(CoreError::EmptyEnsemble))?;
    let finals: Vec<f64> = traces.iter().map(|t| t.last().mean_loss).collect();
    let final_d_t = traces
        .iter()
        .map(|t| t.last().d_t)
        .collect::<Option<Vec<f64>>>()
        .map(|d| Stat::of(&d));
    let accuracy = prepared.holdout.as_ref().and_then(|holdout| {
        let mut means = Vec::with_capacity(traces.len());
        let mut maxes = Vec::with_capacity(traces.len());
        for trace in traces {
            let accs = trace
                .final_params
                .iter()
                .map(|w| prepared.problem.accuracy(w, holdout))
                .collect::<Option<Vec<f64>>>()?;
            means.push(accs.iter().sum::<f64>() / accs.len() as f64);
            maxes.push(accs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Some(AccuracySummary {
            mean_over_workers: Stat::of(&means),
            max_over_workers: Stat::of(&maxes),
        })
    });
    let vectors: Vec<f64> = traces.iter().map(|t| t.last().vectors_cum as f64).collect();
    let scalars: Vec<f64> = traces.iter().map(|t| t.last().scalars_cum as f64).collect();
    let epsilon = traces.iter().filter_map(|t| t.last().epsilon).reduce(f64::max);
    Ok(Summary {
        algorithm: first.algorithm.clone(),
        workers: first.workers,
        follower_count: first.follower_count,
        iterations: prepared.config.sim.hyper.total_iterations,
        runs: traces.len(),
        seeds: traces.iter().map(|t| t.seed).collect(),
        final_mean_loss: Stat::of(&finals),
        final_d_t,
        accuracy,
        vectors_total: Stat::of(&vectors),
        scalars_total: Stat::of(&scalars),
        comm: comm_accounting(first, None).map_err(SimError::Analysis)?,
        epsilon,
        delta: prepared.config.sim.privacy.map(|p| p.delta),
        warnings: prepared.warnings.clone(),
    })
}

/// Row-wise ensemble mean; traces must share a row count.
pub fn mean_curve(traces: &[RunTrace]) -> Result<Vec<CurvePoint>> {
    let first = traces.first().ok_or(SimError::Analysis(CoreError::EmptyEnsemble))?;
    let rows = first.rows.len();
    if let Some(t) = traces.iter().find(|t| t.rows.len() != rows) {
        return Err(SimError::Analysis(CoreError::DimensionMismatch {
            expected: rows,
            actual: t.rows.len(),
        }));
    }
    Ok((0..rows)
        .map(|i| {
            let losses: Vec<f64> = traces.iter().map(|t| t.rows[i].mean_loss).collect();
            let (mean_loss, stderr) = mean_stderr(&losses);
            let vectors_cum = traces.iter().map(|t| t.rows[i].vectors_cum as f64).sum::<f64>() / traces.len() as f64;
            CurvePoint {
                t: first.rows[i].t,
                vectors_cum,
                mean_loss,
                stderr,
            }
        })
        .collect())
}
