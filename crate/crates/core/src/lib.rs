//! Simulation core for leader/follower elastic-averaging SGD (LEASGD).
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithmic piece
//! of the simulator: optimization problems and their gradient oracles, the
//! leader/follower roster, the synchronous and Poisson-clock schedulers, the
//! D-PSGD ring baseline, gradient privatization with moments accounting, and
//! the convergence-bound evaluator. IO, configuration files and the CLI live
//! in the `leasgd-sim` crate.
#![no_std]
#![cfg_attr(docsrs, feature(doc_cfg))]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod dpsgd;
mod error;
pub mod math;
pub mod optimizer;
pub mod privacy;
pub mod problem;
pub mod rng;
pub mod sim;
pub mod theory;
pub mod topology;
pub mod trace;

pub use error::{Error, Result};
pub use optimizer::{HyperParams, WorkerState};
pub use privacy::{PrivacyConfig, PrivacyLedger};
pub use problem::{DataShard, Dataset, GradientSample, Problem, ProblemKind};
pub use sim::{simulate, Algorithm, InitSpec, Mode, SimConfig};
pub use theory::{DistanceSeries, TheoryParams};
pub use topology::{Pairing, Role, Roster};
pub use trace::{RunTrace, TraceRow};
