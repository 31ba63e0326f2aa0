//! Draft-and-verify sampling primitives.
//!
//! A *draft* proposes candidate continuations from the cheap draft model: a
//! chain of `k` tokens, or more generally a tree whose per-depth fan-out is
//! given by a [`KConfig`] (siblings are drawn without replacement). A
//! *verify* pass re-judges those candidates against the target model with a
//! rejection rule chosen so the emitted tokens are distributed exactly as if
//! the target model had been sampled directly — speculation changes only
//! throughput, never the output distribution.

mod draft;
mod kconfig;
mod tree;
mod verify;

pub use draft::{draft, DraftResult};
pub use kconfig::KConfig;
pub use tree::{CandidateNode, CandidateTree};
pub use verify::{expected_alpha, verify_chain, verify_tree, VerifyOutcome};
