//! Deterministic random-stream derivation.
//!
//! All randomness in a run descends from one master seed. The master seed
//! keys a ChaCha8 generator; every consumer gets its own ChaCha stream id
//! under that key, so streams never overlap (each has 2^64 blocks) and are
//! independent by construction.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type used for every stream.
pub type Stream = ChaCha8Rng;

const COORDINATOR_STREAM: u64 = 0;
const STREAMS_PER_WORKER: u64 = 3;

/// What a per-worker stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// Minibatch sampling.
    Data = 0,
    /// Privacy noise.
    Noise = 1,
    /// Poisson wake-up clock (asynchronous runs).
    Clock = 2,
}

#[derive(Debug, Clone)]
pub struct WorkerStreams {
    pub data: Stream,
    pub noise: Stream,
    pub clock: Stream,
}

#[derive(Debug, Clone)]
pub struct SeedStreams {
    /// Initial parameters, roster draws and pairings.
    pub coordinator: Stream,
    pub workers: Vec<WorkerStreams>,
}

fn keyed(master_seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

pub fn coordinator_stream(master_seed: u64) -> Stream {
    keyed(master_seed, COORDINATOR_STREAM)
}

pub fn worker_stream(master_seed: u64, worker: usize, kind: StreamKind) -> Stream {
    keyed(master_seed, 1 + worker as u64 * STREAMS_PER_WORKER + kind as u64)
}

/// Derive the coordinator stream and three streams per worker.
pub fn seed_streams(master_seed: u64, m: usize) -> SeedStreams {
    SeedStreams {
        coordinator: coordinator_stream(master_seed),
        workers: (0..m)
            .map(|i| WorkerStreams {
                data: worker_stream(master_seed, i, StreamKind::Data),
                noise: worker_stream(master_seed, i, StreamKind::Noise),
                clock: worker_stream(master_seed, i, StreamKind::Clock),
            })
            .collect(),
    }
}

/// Seed of the `index`-th run of an experiment keyed by `master_seed`.
pub fn derive_run_seed(master_seed: u64, index: usize) -> u64 {
    use rand::RngCore;
    let mut rng = keyed(master_seed, u64::MAX - index as u64);
    rng.next_u64()
}
