//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A probability vector failed validation (negative entry, wrong sum, ...).
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// A token id is outside the model's vocabulary.
    #[error("token id {token} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },

    /// A context exceeded the model's maximum supported length.
    #[error("context of length {len} exceeds maximum context length {max}")]
    ContextTooLong { len: usize, max: usize },

    /// Two models that must share a vocabulary do not.
    #[error("vocabulary size mismatch: {left} vs {right}")]
    VocabMismatch { left: usize, right: usize },

    /// A configuration value is structurally invalid.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A drafted token carries zero draft probability. The verifier's
    /// acceptance ratio is undefined in that case, so this is a contract
    /// violation by whoever produced the draft.
    #[error("drafted token {token} has zero draft probability")]
    ZeroDraftProbability { token: u32 },

    /// An attempt to sample from an (effectively) all-zero weight vector.
    #[error("cannot sample from a degenerate all-zero distribution")]
    DegenerateDistribution,

    /// The executor detected that no progress is possible: at least one
    /// sequence is unfinished while every worker is idle and the verify
    /// queue is empty.
    #[error("scheduler deadlock: {0}")]
    Deadlock(String),

    /// A schedule trace violated one of its structural invariants.
    #[error("trace violation: {0}")]
    TraceViolation(String),

    /// An error attributed to a specific sequence of a scheduled run.
    #[error("sequence {0}: {1}")]
    Sequence(u32, #[source] Box<Error>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the index of the sequence it occurred on.
    pub fn for_sequence(self, seq: u32) -> Error {
        Error::Sequence(seq, Box::new(self))
    }
}
