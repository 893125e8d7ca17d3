use std::path::PathBuf;

use leasgd_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("configuration rejected: {0}")]
    Validation(#[source] CoreError),

    #[error("run {run} (seed {seed}) aborted: {source}")]
    Run {
        run: usize,
        seed: u64,
        #[source]
        source: CoreError,
    },

    #[error("{0}")]
    Analysis(#[source] CoreError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Process exit status for validation failures.
pub const EXIT_VALIDATION: u8 = 2;
/// Process exit status for aborted runs and I/O failures.
pub const EXIT_RUNTIME: u8 = 3;

impl SimError {
    pub fn exit_code(&self) -> u8 {
        match self {
            SimError::Config(_) | SimError::Validation(_) | SimError::Mismatch(_) => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}
