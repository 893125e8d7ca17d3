//! Post-hoc analyses over exported trace directories.

use std::path::{Path, PathBuf};

use leasgd_core::math::mean_stderr;
use leasgd_core::problem::estimate_sigma1;
use leasgd_core::rng::coordinator_stream;
use leasgd_core::sim::initial_params_for_seed;
use leasgd_core::theory::{check_bound_dominance, derive_theory_params, subsystem_p, DominanceReport};
use leasgd_core::{Algorithm, DistanceSeries, Error as CoreError, TheoryParams};
use serde::{Deserialize, Serialize};

use crate::config::{Prepared, RunConfig};
use crate::error::{Result, SimError};
use crate::export::{read_json, read_runs, read_summary, write_csv, write_json, CsvRow, LedgerEntry};

pub const BOUND_SERIES_FILE: &str = "bound_series.csv";
pub const BOUND_REPORT_FILE: &str = "bound_report.json";

/// Slack applied when the run has no gradient or privacy noise.
pub const NOISELESS_SLACK: f64 = 0.05;
/// Slack applied otherwise.
pub const NOISY_SLACK: f64 = 0.10;

/// Largest disagreement tolerated between a stored and a recomputed ε.
pub const AUDIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub t: u64,
    pub d_t: f64,
    pub stderr: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub config: RunConfig,
    pub constants: TheoryParams,
    pub pass: bool,
    pub first_violation_t: Option<u64>,
    pub empirical_ratio: Option<f64>,
    pub bound_series_path: PathBuf,
    pub slack: f64,
    pub noise_floor: f64,
    pub dominance: DominanceReport,
}

/// Average `d_t` across run rows.
pub fn distance_series(runs: &[Vec<CsvRow>]) -> Result<DistanceSeries> {
    let first = runs.first().ok_or(SimError::Analysis(CoreError::EmptyEnsemble))?;
    let len = first.len();
    if let Some(r) = runs.iter().find(|r| r.len() != len) {
        return Err(SimError::Analysis(CoreError::DimensionMismatch {
            expected: len,
            actual: r.len(),
        }));
    }
    let mut d = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    for i in 0..len {
        let values = runs
            .iter()
            .map(|r| r[i].d_t)
            .collect::<Option<Vec<f64>>>()
            .ok_or(SimError::Analysis(CoreError::MissingOptimum))?;
        let (mean, se) = mean_stderr(&values);
        d.push(mean);
        stderr.push(se);
    }
    Ok(DistanceSeries {
        d,
        stderr,
        seeds_averaged: runs.len(),
    })
}

/// Gradient-noise variance for the configured batch size: exactly zero for
/// full-shard batches, otherwise estimated at `w*` and the first run's
/// initial point, maximized over shards.
pub fn sigma1_sq(prepared: &Prepared, init: &[f64]) -> Result<f64> {
    let spec = &prepared.config.theory;
    if let Some(s) = spec.sigma1_sq {
        return Ok(s);
    }
    let batch = prepared.config.sim.batch_size;
    if prepared.shards.iter().all(|s| batch >= s.sample_count()) {
        return Ok(0.0);
    }
    let w_star = prepared
        .problem
        .optimum()
        .ok_or(SimError::Analysis(CoreError::MissingOptimum))?;
    let mut rng = coordinator_stream(spec.sigma1_seed);
    let mut worst: f64 = 0.0;
    for shard in &prepared.shards {
        let s = estimate_sigma1(
            &prepared.problem,
            &[w_star, init],
            shard,
            batch,
            spec.sigma1_trials,
            &mut rng,
        )
        .map_err(SimError::Validation)?;
        worst = worst.max(s);
    }
    Ok(worst)
}

/// Constants of the bound for `seeds`, privacy included.
pub fn theory_constants(prepared: &Prepared, seeds: &[u64]) -> Result<TheoryParams> {
    let sim = &prepared.config.sim;
    if !matches!(sim.algorithm, Algorithm::LeasgdSync | Algorithm::LeasgdAsync) {
        return Err(SimError::Config(format!(
            "the bound applies to leader/follower runs, not {}",
            sim.algorithm.name()
        )));
    }
    let init: Vec<Vec<f64>> = seeds
        .iter()
        .flat_map(|&s| initial_params_for_seed(&prepared.problem, sim, s))
        .collect();
    let s1 = sigma1_sq(prepared, &init[0])?;
    let p = subsystem_p(sim.workers, sim.follower_count).map_err(SimError::Validation)?;
    let tp = derive_theory_params(&prepared.problem, &sim.hyper, p, s1, &init).map_err(SimError::Validation)?;
    Ok(match sim.privacy {
        Some(cfg) => tp.with_privacy(cfg.clip, cfg.sigma2),
        None => tp,
    })
}

pub fn default_slack(tp: &TheoryParams) -> f64 {
    if tp.sigma1_sq == 0.0 {
        NOISELESS_SLACK
    } else {
        NOISY_SLACK
    }
}

/// Compare an exported ensemble against the bound; writes the series and
/// the JSON report into `dir`.
pub fn bound_check(dir: &Path, prepared: &Prepared, slack: Option<f64>) -> Result<BoundReport> {
    let runs = read_runs(dir)?;
    let summary = read_summary(dir)?;
    if summary.seeds.len() != runs.len() {
        return Err(SimError::Mismatch(format!(
            "{} lists {} seeds but holds {} run files",
            dir.display(),
            summary.seeds.len(),
            runs.len()
        )));
    }
    let series = distance_series(&runs)?;
    let tp = theory_constants(prepared, &summary.seeds)?;
    let slack = slack
        .or(prepared.config.theory.slack)
        .unwrap_or_else(|| default_slack(&tp));
    let dominance = check_bound_dominance(&series, &tp, slack);

    let points = runs[0]
        .iter()
        .zip(series.d.iter().zip(&series.stderr))
        .map(|(row, (&d_t, &stderr))| BoundPoint {
            t: row.t,
            d_t,
            stderr,
            bound: tp.bound(row.t),
        });
    let series_path = dir.join(BOUND_SERIES_FILE);
    write_csv(&series_path, points)?;
    let report = BoundReport {
        config: prepared.config.clone(),
        constants: tp,
        pass: dominance.pass,
        first_violation_t: dominance.first_violation_t,
        empirical_ratio: dominance.empirical_ratio,
        bound_series_path: series_path,
        slack,
        noise_floor: tp.noise_floor(),
        dominance,
    };
    write_json(&dir.join(BOUND_REPORT_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub run: usize,
    pub worker: usize,
    pub steps: u64,
    pub sigma2: f64,
    pub q: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub recomputed: f64,
    pub strong_composition: f64,
    pub agrees: bool,
}

/// Recompute every ledger entry from `(steps, σ₂, q, δ)` alone.
pub fn audit_privacy(path: &Path) -> Result<Vec<AuditRow>> {
    let entries: Vec<LedgerEntry> = read_json(path)?;
    entries
        .into_iter()
        .map(|e| {
            let fresh = e.report.recompute().map_err(SimError::Analysis)?;
            let diff = (fresh.epsilon_moments - e.report.epsilon_moments).abs();
            Ok(AuditRow {
                run: e.run,
                worker: e.worker,
                steps: e.report.steps,
                sigma2: e.report.sigma2,
                q: e.report.q,
                delta: e.report.delta,
                epsilon: e.report.epsilon_moments,
                recomputed: fresh.epsilon_moments,
                strong_composition: fresh.epsilon_strong_composition,
                agrees: diff <= AUDIT_TOLERANCE,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub workers: usize,
    pub final_loss_a: f64,
    pub final_loss_b: f64,
    /// `final_loss_a − final_loss_b`.
    pub loss_delta: f64,
    pub vectors_per_comm_round_a: f64,
    pub vectors_per_comm_round_b: f64,
    /// `1 − a/b` in vectors per communication round.
    pub reduction: Option<f64>,
    pub vectors_total_a: f64,
    pub vectors_total_b: f64,
}

pub fn compare(a: &Path, b: &Path) -> Result<Comparison> {
    let sa = read_summary(a)?;
    let sb = read_summary(b)?;
    if sa.workers != sb.workers {
        return Err(SimError::Mismatch(format!(
            "worker counts differ: {} has {}, {} has {}",
            a.display(),
            sa.workers,
            b.display(),
            sb.workers
        )));
    }
    let va = sa.comm.vectors_per_comm_round;
    let vb = sb.comm.vectors_per_comm_round;
    Ok(Comparison {
        a: sa.algorithm,
        b: sb.algorithm,
        workers: sa.workers,
        final_loss_a: sa.final_mean_loss.mean,
        final_loss_b: sb.final_mean_loss.mean,
        loss_delta: sa.final_mean_loss.mean - sb.final_mean_loss.mean,
        vectors_per_comm_round_a: va,
        vectors_per_comm_round_b: vb,
        reduction: (vb > 0.0).then(|| 1.0 - va / vb),
        vectors_total_a: sa.vectors_total.mean,
        vectors_total_b: sb.vectors_total.mean,
    })
}
