//! Run configuration, validation and algorithm dispatch.

use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optimizer::{sgd_update, HyperParams, WorkerState};
use crate::privacy::{AccountingMethod, PrivacyConfig, PrivacyLedger};
use crate::problem::{DataShard, Problem};
use crate::rng::{seed_streams, Stream};
use crate::topology::check_pool_sizes;
use crate::trace::{Recorder, RunTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    LeasgdSync,
    LeasgdAsync,
    Dpsgd,
    LocalSgd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LeasgdSync => "leasgd_sync",
            Algorithm::LeasgdAsync => "leasgd_async",
            Algorithm::Dpsgd => "dpsgd",
            Algorithm::LocalSgd => "local_sgd",
        }
    }
}

/// `Theory` turns every convergence-analysis precondition into a hard
/// error and requires a known optimum; `Explore` only warns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Theory,
    #[default]
    Explore,
}

/// Initial parameters: `scale · N(0, I)` from the coordinator stream,
/// either one draw shared by all workers or one draw each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    #[serde(default = "unit")]
    pub scale: f64,
    #[serde(default = "yes")]
    pub shared: bool,
}

fn unit() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            scale: 1.0,
            shared: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub algorithm: Algorithm,
    pub workers: usize,
    #[serde(default)]
    pub follower_count: usize,
    pub hyper: HyperParams,
    pub batch_size: usize,
    #[serde(default)]
    pub privacy: Option<PrivacyConfig>,
    /// Poisson wake-up rates, one per worker (asynchronous runs).
    #[serde(default)]
    pub async_rates: Option<Vec<f64>>,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub mode: Mode,
}

impl SimConfig {
    /// Whether the asynchronous scheduler runs without pairing.
    pub(crate) fn async_local_only(&self) -> bool {
        self.follower_count == 0 || self.workers == 1
    }

    /// Most leaders that can pull one follower in a single update.
    pub fn max_fan_in(&self) -> usize {
        match self.algorithm {
            Algorithm::LeasgdSync => self.workers - self.follower_count,
            Algorithm::LeasgdAsync if !self.async_local_only() => 1,
            _ => 0,
        }
    }

    /// Check the configuration against `problem`. Structural problems are
    /// always errors; convergence-analysis preconditions are errors in
    /// theory mode and are returned as warnings otherwise.
    pub fn validate(&self, problem: &Problem) -> Result<Vec<String>> {
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        self.hyper.validate()?;
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        match self.algorithm {
            Algorithm::LeasgdSync => check_pool_sizes(self.workers, self.follower_count)?,
            Algorithm::LeasgdAsync if !self.async_local_only() => check_pool_sizes(self.workers, self.follower_count)?,
            Algorithm::Dpsgd if self.workers < 3 => {
                return Err(invalid("workers", "the ring baseline needs at least 3 workers"));
            }
            _ => {}
        }
        if let Some(p) = &self.privacy {
            p.validate()?;
        }
        if let Some(rates) = &self.async_rates {
            if rates.len() != self.workers {
                return Err(Error::DimensionMismatch {
                    expected: self.workers,
                    actual: rates.len(),
                });
            }
            if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(invalid("async_rates", "every rate must be positive and finite"));
            }
        }
        if !(self.init.scale >= 0.0 && self.init.scale.is_finite()) {
            return Err(invalid("init.scale", "must be finite and non-negative"));
        }

        let mut issues = Vec::new();
        let mut report = |e: Error| -> Result<()> {
            match self.mode {
                Mode::Theory => Err(e),
                Mode::Explore => {
                    issues.push(alloc::format!("{e}"));
                    Ok(())
                }
            }
        };
        let beta = self.max_fan_in() as f64 * self.hyper.alpha();
        if beta >= 1.0 {
            report(Error::Precondition {
                condition: "beta < 1",
                detail: alloc::format!("largest aggregate pull beta = {beta}"),
            })?;
        }
        match problem.strong_convexity() {
            Ok((mu, l)) => {
                let limit = HyperParams::step_limit(mu, l, beta);
                if self.hyper.eta > limit {
                    report(Error::Precondition {
                        condition: "eta <= 2(1-beta)/(mu+L)",
                        detail: alloc::format!("eta = {} exceeds {limit}", self.hyper.eta),
                    })?;
                }
            }
            Err(e) => report(e)?,
        }
        if problem.optimum().is_none() {
            report(Error::MissingOptimum)?;
        }
        Ok(issues)
    }
}

/// Initial parameter vectors, drawn from the coordinator stream before any
/// other use of it.
pub fn initial_params(problem: &Problem, cfg: &SimConfig, coordinator: &mut Stream) -> Vec<Vec<f64>> {
    let n = problem.dim();
    let draw = |rng: &mut Stream| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                cfg.init.scale * z
            })
            .collect()
    };
    if cfg.init.shared {
        let w = draw(coordinator);
        alloc::vec![w; cfg.workers]
    } else {
        (0..cfg.workers).map(|_| draw(coordinator)).collect()
    }
}

/// Initial parameters of the run keyed by `seed`.
pub fn initial_params_for_seed(problem: &Problem, cfg: &SimConfig, seed: u64) -> Vec<Vec<f64>> {
    initial_params(problem, cfg, &mut crate::rng::coordinator_stream(seed))
}

/// Everything a scheduler needs at iteration 0.
pub(crate) struct RunSetup<'a> {
    pub states: Vec<WorkerState>,
    pub coordinator: Stream,
    pub ledgers: Vec<PrivacyLedger>,
    pub recorder: Recorder<'a>,
    pub initial: Vec<Vec<f64>>,
    pub delta: f64,
}

impl<'a> RunSetup<'a> {
    pub fn new(problem: &'a Problem, shards: &'a [DataShard], cfg: &SimConfig, seed: u64) -> Result<Self> {
        let streams = seed_streams(seed, cfg.workers);
        let mut coordinator = streams.coordinator;
        let initial = initial_params(problem, cfg, &mut coordinator);
        let states: Vec<WorkerState> = streams
            .workers
            .into_iter()
            .zip(&initial)
            .enumerate()
            .map(|(i, (s, w))| WorkerState::new(i, w.clone(), s))
            .collect();
        let ledgers = match &cfg.privacy {
            Some(p) => worker_ledgers(p, shards, cfg.batch_size)?,
            None => Vec::new(),
        };
        let mut recorder = Recorder::new(problem, shards);
        recorder.refresh_all(states.iter().map(|s| s.w.as_slice()), 0)?;
        let delta = cfg.privacy.map_or(crate::privacy::DEFAULT_DELTA, |p| p.delta);
        recorder.push(0, 0.0, &ledgers, delta)?;
        let mut setup = Self {
            states,
            coordinator,
            ledgers,
            recorder,
            initial,
            delta,
        };
        setup.sync_losses();
        Ok(setup)
    }

    pub fn sync_losses(&mut self) {
        for (s, l) in self.states.iter_mut().zip(self.recorder.losses()) {
            s.last_loss = *l;
        }
    }

    /// Draw each worker's gradient; privatize and charge the ledgers if
    /// the run is private.
    pub fn gradients(&mut self, problem: &Problem, shards: &[DataShard], cfg: &SimConfig) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.states.len());
        for (i, s) in self.states.iter_mut().enumerate() {
            let g = s.draw_gradient(problem, &shards[i], cfg.batch_size)?;
            out.push(match &cfg.privacy {
                Some(p) => {
                    self.ledgers[i].account_step();
                    s.privatize(&g, p)
                }
                None => g,
            });
        }
        Ok(out)
    }

    pub fn record(&mut self, t: u64, virtual_time: f64) -> Result<()> {
        self.recorder
            .refresh_all(self.states.iter().map(|s| s.w.as_slice()), t)?;
        self.recorder.push(t, virtual_time, &self.ledgers, self.delta)?;
        self.sync_losses();
        Ok(())
    }

    pub fn finish(self, cfg: &SimConfig, seed: u64) -> RunTrace {
        RunTrace {
            algorithm: String::from(cfg.algorithm.name()),
            workers: cfg.workers,
            follower_count: cfg.follower_count,
            tau: cfg.hyper.tau,
            seed,
            rows: self.recorder.rows,
            initial_params: self.initial,
            final_params: self.states.iter().map(|s| s.w.clone()).collect(),
            step_counts: self.states.iter().map(|s| s.local_step_count).collect(),
            ledgers: self.ledgers,
        }
    }
}

/// One moments ledger per worker with the sampling ratio of its own shard.
pub fn worker_ledgers(cfg: &PrivacyConfig, shards: &[DataShard], batch_size: usize) -> Result<Vec<PrivacyLedger>> {
    let mut cache: Vec<(usize, PrivacyLedger)> = Vec::new();
    let mut out = Vec::with_capacity(shards.len());
    for shard in shards {
        let len = shard.sample_count();
        let ledger = match cache.iter().find(|(n, _)| *n == len) {
            Some((_, l)) => l.clone(),
            None => {
                let mut c = *cfg;
                c.sampling_ratio = batch_size as f64 / len as f64;
                let l = PrivacyLedger::new(&c, AccountingMethod::Moments)?;
                cache.push((len, l.clone()));
                l
            }
        };
        out.push(ledger);
    }
    Ok(out)
}

/// Independent SGD on every worker.
pub fn run_local(problem: &Problem, shards: &[DataShard], cfg: &SimConfig, seed: u64) -> Result<RunTrace> {
    let mut run = RunSetup::new(problem, shards, cfg, seed)?;
    for t in 0..cfg.hyper.total_iterations {
        let grads = run.gradients(problem, shards, cfg)?;
        for (s, g) in run.states.iter_mut().zip(&grads) {
            sgd_update(&mut s.w, g, cfg.hyper.eta);
        }
        run.record(t + 1, (t + 1) as f64)?;
    }
    Ok(run.finish(cfg, seed))
}

/// Validate `cfg` and execute one run keyed by `seed`.
pub fn simulate(problem: &Problem, shards: &[DataShard], cfg: &SimConfig, seed: u64) -> Result<RunTrace> {
    cfg.validate(problem)?;
    if shards.len() != cfg.workers {
        return Err(Error::DimensionMismatch {
            expected: cfg.workers,
            actual: shards.len(),
        });
    }
    for s in shards {
        if cfg.batch_size > s.sample_count() {
            return Err(invalid(
                "batch_size",
                alloc::format!(
                    "{} exceeds shard {} of {} samples",
                    cfg.batch_size,
                    s.worker_id,
                    s.sample_count()
                ),
            ));
        }
    }
    match cfg.algorithm {
        Algorithm::LeasgdSync => crate::optimizer::run_sync(problem, shards, cfg, seed),
        Algorithm::LeasgdAsync => crate::optimizer::run_async(problem, shards, cfg, seed),
        Algorithm::Dpsgd => crate::dpsgd::run_dpsgd(problem, shards, cfg, seed),
        Algorithm::LocalSgd => run_local(problem, shards, cfg, seed),
    }
}
