//! Lossless speculative decoding over deterministic toy language models,
//! plus the machinery needed to study how it behaves at scale:
//!
//! - [`lm`] — small, exactly-reproducible language models (lookup tables,
//!   add-one-smoothed n-grams, uniform-smoothed variants) and the counter-based
//!   RNG streams that make every run replayable.
//! - [`sampling`] — draft/verify primitives: chain and tree candidate drafting,
//!   rejection-based verification that preserves the target model's output
//!   distribution exactly, and acceptance-rate analysis.
//! - [`sched`] — a rounds-scheduled executor that lets `n` drafter workers
//!   share one verifier through a FCFS queue, with a virtual-time mode and a
//!   threaded mode that produce bit-identical responses.
//! - [`tot`] — breadth-first tree search over reasoning states, where both
//!   thought generation and state evaluation run on the scheduled executor.
//! - [`timing`] — a discrete-event simulator comparing serial decoding,
//!   speculative decoding, and scheduled speculative decoding under a
//!   configurable cost model.
//! - [`metrics`] / [`experiment`] — throughput/acceptance accounting and the
//!   reproducible experiment driver used by the `specsched` binary.

pub mod error;
pub mod experiment;
pub mod lm;
pub mod metrics;
pub mod sampling;
pub mod sched;
pub mod timing;
pub mod tot;

pub use error::{Error, Result};
