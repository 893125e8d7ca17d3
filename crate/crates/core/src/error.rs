use alloc::string::String;

use crate::problem::ProblemKind;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty minibatch")]
    EmptyBatch,

    #[error("sample index {index} out of range for shard of {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite {what} at iteration {iteration} (worker {worker})")]
    NonFinite {
        what: &'static str,
        iteration: u64,
        worker: usize,
    },

    /// A precondition of the convergence analysis does not hold.
    #[error("precondition `{condition}` violated: {detail}")]
    Precondition { condition: &'static str, detail: String },

    #[error("problem kind {0:?} carries no strong-convexity constants")]
    NotConvex(ProblemKind),

    #[error("the optimum w* is unknown for this problem")]
    MissingOptimum,

    #[error("privacy ledger has no recorded steps")]
    EmptyLedger,

    #[error("empty ensemble")]
    EmptyEnsemble,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
