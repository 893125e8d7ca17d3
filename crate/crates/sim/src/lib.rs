//! Experiment harness for `leasgd-core`: configuration files, multi-seed
//! orchestration, CSV/JSON export and the analyses behind the `leasgd`
//! command-line tool.

pub mod analysis;
pub mod config;
pub mod error;
pub mod experiment;
pub mod export;

pub use config::{prepare, Prepared, RunConfig};
pub use error::{Result, SimError};
pub use experiment::{run_experiment, Experiment, Summary};
pub use export::export;
