//! Per-sequence state and the round engine shared by every execution mode.
//!
//! The virtual-time loop, the threaded executor, and the isolated serial
//! reference all advance sequences through exactly this code with exactly
//! these RNG streams; that sharing — not luck — is what makes their outputs
//! bit-identical.

use crate::error::Result;
use crate::lm::{ModelPair, Phase, RngStream, StreamId, TokenId};
use crate::sampling::{draft, verify_chain, verify_tree, DraftResult, KConfig};

/// Decoding state of one sequence in a scheduled run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceState {
    index: u32,
    prefix: Vec<TokenId>,
    validated: Vec<TokenId>,
    target_len: usize,
    done: bool,
    /// The draft label: `true` while the sequence's drafter may start a new
    /// round, `false` from the moment a round is enqueued until its
    /// verification is applied.
    gamma: bool,
}

impl SequenceState {
    pub fn new(index: u32, prefix: Vec<TokenId>, target_len: usize) -> Self {
        SequenceState {
            index,
            prefix,
            validated: Vec::with_capacity(target_len),
            target_len,
            done: false,
            gamma: true,
        }
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn prefix(&self) -> &[TokenId] {
        &self.prefix
    }

    /// Number of validated (committed) new tokens, `L_i`.
    pub fn validated_len(&self) -> usize {
        self.validated.len()
    }

    /// The committed response tokens (without the prefix).
    pub fn response(&self) -> &[TokenId] {
        &self.validated
    }

    /// Target number of new tokens, `l`.
    pub fn target_len(&self) -> usize {
        self.target_len
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Whether the sequence's drafter may start a new round.
    pub fn gamma(&self) -> bool {
        self.gamma
    }

    pub(crate) fn set_gamma(&mut self, value: bool) {
        self.gamma = value;
    }

    /// Prefix plus validated tokens: the context the next round conditions on.
    pub fn context(&self) -> Vec<TokenId> {
        let mut ctx = self.prefix.clone();
        ctx.extend(&self.validated);
        ctx
    }

    /// Commits emitted round tokens, truncating any overshoot past the
    /// target length and marking the sequence done when it gets there.
    /// Returns how many tokens were truncated.
    fn commit(&mut self, emitted: &[TokenId]) -> u32 {
        self.validated.extend(emitted);
        let mut truncated = 0;
        if self.validated.len() >= self.target_len {
            truncated = (self.validated.len() - self.target_len) as u32;
            self.validated.truncate(self.target_len);
            self.done = true;
        }
        truncated
    }
}

/// Everything the executors need to know about an applied round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RoundApply {
    /// Tokens the round emitted, before end-of-sequence truncation.
    pub emitted: u32,
    /// Accepted draft tokens (excludes any correction token).
    pub accepted: u32,
    /// Whether the round ended at a rejection.
    pub rejected: bool,
    /// Whether the sequence reached its target length.
    pub done: bool,
}

/// One sequence's decoding state plus its private RNG streams.
#[derive(Debug, Clone)]
pub(crate) struct SeqRunner {
    pub state: SequenceState,
    draft_rng: RngStream,
    verify_rng: RngStream,
}

impl SeqRunner {
    pub fn new(seed: u64, index: u32, prefix: Vec<TokenId>, target_len: usize) -> Self {
        SeqRunner {
            state: SequenceState::new(index, prefix, target_len),
            draft_rng: RngStream::new(seed, StreamId::new(index, Phase::Draft)),
            verify_rng: RngStream::new(seed, StreamId::new(index, Phase::Verify)),
        }
    }

    /// Drafts the next candidate round below the current context and
    /// clears the draft label until the round is verified.
    pub fn draft_round(&mut self, models: &ModelPair, kconfig: &KConfig) -> Result<DraftResult> {
        debug_assert!(self.state.gamma(), "draft started without the label");
        let context = self.state.context();
        let drafted = draft(&models.draft, &context, kconfig, &mut self.draft_rng)?;
        self.state.set_gamma(false);
        Ok(drafted)
    }

    /// Verifies a drafted round and commits its emission.
    pub fn verify_round(
        &mut self,
        models: &ModelPair,
        kconfig: &KConfig,
        drafted: &DraftResult,
    ) -> Result<RoundApply> {
        let context = self.state.context();
        let outcome = if kconfig.is_chain() {
            verify_chain(&models.target, &context, drafted, &mut self.verify_rng)?
        } else {
            verify_tree(&models.target, &context, drafted, &mut self.verify_rng)?
        };
        outcome.check_contract(drafted.tree().depth())?;
        let emitted = outcome.emitted();
        self.state.commit(&emitted);
        self.state.set_gamma(true);
        Ok(RoundApply {
            emitted: emitted.len() as u32,
            accepted: outcome.accepted_count() as u32,
            rejected: outcome.was_rejected(),
            done: self.state.is_done(),
        })
    }
}

/// Runs one sequence to completion in isolation: draft, verify, repeat. The
/// reference semantics that every scheduled mode must reproduce token for
/// token.
pub fn run_serial_sequence(
    models: &ModelPair,
    kconfig: &KConfig,
    seed: u64,
    index: u32,
    prefix: Vec<TokenId>,
    target_len: usize,
) -> Result<Vec<TokenId>> {
    let mut runner = SeqRunner::new(seed, index, prefix, target_len);
    while !runner.state.is_done() {
        let drafted = runner.draft_round(models, kconfig)?;
        runner.verify_round(models, kconfig, &drafted)?;
    }
    Ok(runner.state.response().to_vec())
}
