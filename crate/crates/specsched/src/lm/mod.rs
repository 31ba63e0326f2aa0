//! Toy language models with exactly-reproducible sampling.
//!
//! Everything downstream of this module (drafting, verification, scheduling,
//! tree search) is deterministic given a master seed because:
//!
//! - models are pure functions from a token context to a next-token
//!   [`Distribution`] (no RNG at query time), and
//! - all randomness flows through [`RngStream`]s addressed by a
//!   `(sequence, phase)` [`StreamId`], so the draws one consumer makes can
//!   never perturb another consumer's stream.

mod dist;
mod model;
mod rng;

pub use dist::{Distribution, TokenId};
pub use model::{load_corpus, Model, ModelPair, ModelSpec, LookupRowsSpec, MAX_CONTEXT_DEFAULT};
pub use rng::{mix_seed, Phase, RngStream, StreamId};

pub(crate) use dist::sample_index_from_masses;
