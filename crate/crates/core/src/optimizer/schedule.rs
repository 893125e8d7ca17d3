//! Synchronous rounds and the Poisson-clock event loop.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::{apply_round, elastic_pair_update, sgd_update};
use crate::error::{invalid, Result};
use crate::problem::{DataShard, Problem};
use crate::sim::{RunSetup, SimConfig};
use crate::topology::{draw_pairing, initial_roster, Role, Roster};
use crate::trace::RunTrace;

fn recat_scalars(m: usize) -> u64 {
    let (up, down) = crate::topology::recat_message_cost(m);
    up + down
}

fn assign_roles(run: &mut RunSetup<'_>, roster: &Roster) {
    for (i, s) in run.states.iter_mut().enumerate() {
        s.role = roster.role(i);
    }
}

/// Lock-step schedule: recategorize every `κτ` iterations (randomly at
/// `t = 0`, by full-shard loss afterwards) and run a communication round
/// every `τ` iterations with a freshly drawn pairing. One row is recorded
/// per iteration.
pub fn run_sync(problem: &Problem, shards: &[DataShard], cfg: &SimConfig, seed: u64) -> Result<RunTrace> {
    let hp = cfg.hyper;
    let m = cfg.workers;
    let mut run = RunSetup::new(problem, shards, cfg, seed)?;
    let recat_every = hp.kappa * hp.tau;
    let mut roster = initial_roster(m, cfg.follower_count, &mut run.coordinator)?;
    assign_roles(&mut run, &roster);
    for t in 0..hp.total_iterations {
        if t > 0 && t.is_multiple_of(recat_every) {
            roster = roster.recategorize(run.recorder.losses())?;
            run.recorder.scalars += recat_scalars(m);
            assign_roles(&mut run, &roster);
        }
        let grads = run.gradients(problem, shards, cfg)?;
        if hp.alpha() > 0.0 && t.is_multiple_of(hp.tau) {
            let pairing = draw_pairing(&roster, &mut run.coordinator);
            run.recorder.vectors += 2 * pairing.assignments.len() as u64;
            apply_round(&mut run.states, &roster, &pairing, &grads, &hp)?;
        } else {
            for (s, g) in run.states.iter_mut().zip(&grads) {
                sgd_update(&mut s.w, g, hp.eta);
            }
        }
        run.record(t + 1, (t + 1) as f64)?;
    }
    Ok(run.finish(cfg, seed))
}

/// Pending wake-up, ordered by time then worker id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Wake {
    time: f64,
    worker: usize,
}

impl Eq for Wake {}

impl Ord for Wake {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.worker.cmp(&other.worker))
    }
}

impl PartialOrd for Wake {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn pair_mut<T>(xs: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = xs.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = xs.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// Event-driven schedule. Each worker wakes at the arrivals of its own
/// Poisson process and takes a local step; every `τ`-th wake of a leader
/// is instead a pairwise elastic exchange with a random follower, which
/// receives only the elastic pull. Recategorization fires every `κτm`
/// events. The run lasts `T·m` events, one row each.
pub fn run_async(problem: &Problem, shards: &[DataShard], cfg: &SimConfig, seed: u64) -> Result<RunTrace> {
    let hp = cfg.hyper;
    let m = cfg.workers;
    let mut run = RunSetup::new(problem, shards, cfg, seed)?;
    let rates: Vec<f64> = match &cfg.async_rates {
        Some(r) => r.clone(),
        None => alloc::vec![1.0; m],
    };
    let clocks: Vec<Exp<f64>> = rates
        .iter()
        .map(|&r| Exp::new(r).map_err(|_| invalid("async_rates", "every rate must be positive")))
        .collect::<Result<_>>()?;
    let local_only = cfg.async_local_only();
    let mut roster = if local_only {
        None
    } else {
        let r = initial_roster(m, cfg.follower_count, &mut run.coordinator)?;
        assign_roles(&mut run, &r);
        Some(r)
    };
    let mut queue = BinaryHeap::with_capacity(m);
    for (i, s) in run.states.iter_mut().enumerate() {
        let time = clocks[i].sample(&mut s.streams.clock);
        queue.push(Reverse(Wake { time, worker: i }));
    }
    let mut wakes = alloc::vec![0u64; m];
    let recat_every = hp.kappa * hp.tau * m as u64;
    let events = hp.total_iterations * m as u64;
    let zeros = alloc::vec![0.0; problem.dim()];
    for event in 1..=events {
        let Reverse(Wake { time, worker: i }) = queue.pop().expect("one wake per worker");
        wakes[i] += 1;
        let mut g = run.states[i].draw_gradient(problem, &shards[i], cfg.batch_size)?;
        if let Some(p) = &cfg.privacy {
            run.ledgers[i].account_step();
            g = run.states[i].privatize(&g, p);
        }
        let exchange = match &roster {
            Some(r) if hp.alpha() > 0.0 && r.role(i) == Role::Leader && wakes[i].is_multiple_of(hp.tau) => {
                let followers = r.followers();
                Some(followers[run.coordinator.random_range(0..followers.len())])
            }
            _ => None,
        };
        match exchange {
            Some(f) => {
                let (leader, follower) = pair_mut(&mut run.states, i, f);
                elastic_pair_update(leader, follower, &g, &zeros, &hp)?;
                run.recorder.vectors += 2;
                run.recorder.refresh(f, &run.states[f].w, event)?;
            }
            None => sgd_update(&mut run.states[i].w, &g, hp.eta),
        }
        run.recorder.refresh(i, &run.states[i].w, event)?;
        let next = time + clocks[i].sample(&mut run.states[i].streams.clock);
        queue.push(Reverse(Wake { time: next, worker: i }));
        if let Some(r) = roster.as_mut() {
            if event.is_multiple_of(recat_every) {
                *r = r.recategorize(run.recorder.losses())?;
                run.recorder.scalars += recat_scalars(m);
                let r = r.clone();
                assign_roles(&mut run, &r);
            }
        }
        run.recorder.push(event, time, &run.ledgers, run.delta)?;
        run.sync_losses();
    }
    Ok(run.finish(cfg, seed))
}
