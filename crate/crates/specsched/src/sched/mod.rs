//! Scheduled speculative execution of many sequences.
//!
//! One verifier serves `n` drafter workers through a FCFS queue: each
//! sequence alternates drafting a candidate round and having it verified,
//! and the verifier is never idle while requests wait. Three execution
//! modes share the identical per-sequence round engine and RNG streams, so
//! their decoded outputs are bit-identical and differ only in clocks:
//!
//! * [`SchedMode::VirtualTime`] — a deterministic discrete-event loop over
//!   configurable tick costs; traces are exactly reproducible.
//! * [`SchedMode::Threaded`] — real drafter threads and a verifier thread
//!   with wall-clock traces.
//! * [`run_serial_sequence`] — one sequence at a time, no scheduler at
//!   all; the reference the other two must match token for token.

mod runner;
mod threaded;
mod trace;
pub(crate) mod virtual_time;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{ModelPair, Phase, RngStream, StreamId, TokenId};
use crate::sampling::{DraftResult, KConfig};

pub use runner::{run_serial_sequence, SequenceState};
pub use trace::{
    Actor, EventKind, ScheduleTrace, TimeUnit, TraceEvent, TraceMeta, TraceSummary,
};

pub(crate) use runner::SeqRunner;
pub(crate) use trace::TraceBuilder;

use virtual_time::{run_event_loop, ProviderDraft, ProviderVerify, RoundProvider};

/// Virtual service-time model for [`SchedMode::VirtualTime`] runs.
///
/// Costs are in abstract ticks. The defaults encode the regime speculative
/// execution targets: drafting a candidate costs one tick, a verification
/// round costs one tick, and plain autoregressive decoding by the target
/// would cost [`TickParams::target_ar`] ticks per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TickParams {
    /// Drafter ticks per drafted candidate node.
    pub draft_per_token: u64,
    /// Verifier ticks per verification round.
    pub verify: u64,
    /// Extra verifier ticks when a round ends in a rejection (the
    /// correction token costs a residual resample).
    pub resample: u64,
    /// Target-model ticks per token under plain autoregressive decoding.
    /// Not used by the scheduler itself; it is the baseline that timing
    /// comparisons measure speedups against.
    pub target_ar: u64,
    /// Per-sequence override of `draft_per_token`, for heterogeneous
    /// drafters. Length must equal the run's sequence count.
    pub per_seq_draft: Option<Vec<u64>>,
    /// Maximum extra uniform ticks added to each draft, drawn from the
    /// sequence's timing stream. Zero (the default) draws nothing, so
    /// jitter-free runs consume no timing randomness.
    pub draft_jitter: u64,
}

impl Default for TickParams {
    fn default() -> Self {
        TickParams {
            draft_per_token: 1,
            verify: 1,
            resample: 1,
            target_ar: 3,
            per_seq_draft: None,
            draft_jitter: 0,
        }
    }
}

impl TickParams {
    /// Checks the cost model against a run of `n` sequences.
    pub(crate) fn validate_for(&self, n: usize) -> Result<()> {
        if self.draft_per_token == 0 || self.verify == 0 || self.target_ar == 0 {
            return Err(Error::InvalidConfig(
                "tick costs draft_per_token, verify and target_ar must be positive".into(),
            ));
        }
        if let Some(per_seq) = &self.per_seq_draft {
            if per_seq.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "per_seq_draft has {} entries for {} sequences",
                    per_seq.len(),
                    n
                )));
            }
            if per_seq.contains(&0) {
                return Err(Error::InvalidConfig(
                    "per_seq_draft entries must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Drafter ticks for one round of `nodes` candidates by sequence `seq`.
    pub(crate) fn draft_cost(&self, seq: usize, nodes: u32, timing: &mut RngStream) -> u64 {
        let per_token = self
            .per_seq_draft
            .as_ref()
            .map_or(self.draft_per_token, |v| v[seq]);
        let jitter = if self.draft_jitter == 0 {
            0
        } else {
            timing.next_u64() % (self.draft_jitter + 1)
        };
        per_token * u64::from(nodes) + jitter
    }

    /// Verifier ticks for one round.
    pub(crate) fn verify_cost(&self, rejected: bool) -> u64 {
        self.verify + if rejected { self.resample } else { 0 }
    }
}

/// Which executor carries out a scheduled run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedMode {
    /// Deterministic discrete-event simulation in virtual ticks.
    VirtualTime,
    /// Real threads; timing comes from the wall clock.
    Threaded,
}

/// Full specification of a scheduled run over a fixed model pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Per-level candidate counts of each drafted round.
    pub kconfig: KConfig,
    /// One prompt per sequence; the run decodes all of them concurrently.
    pub prefixes: Vec<Vec<TokenId>>,
    /// New tokens to decode per sequence.
    pub target_len: usize,
    /// Master seed; all per-sequence streams derive from it.
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: SchedMode,
    #[serde(default)]
    pub ticks: TickParams,
}

fn default_mode() -> SchedMode {
    SchedMode::VirtualTime
}

impl RunConfig {
    /// Number of sequences in the run.
    pub fn sequence_count(&self) -> usize {
        self.prefixes.len()
    }

    fn validate(&self, models: &ModelPair) -> Result<()> {
        if self.prefixes.is_empty() {
            return Err(Error::InvalidConfig("no sequences to run".into()));
        }
        if self.target_len == 0 {
            return Err(Error::InvalidConfig("target_len must be positive".into()));
        }
        self.ticks.validate_for(self.prefixes.len())?;
        let max_context = models.target.max_context().min(models.draft.max_context());
        for (i, prefix) in self.prefixes.iter().enumerate() {
            let worst = prefix.len() + self.target_len + self.kconfig.depth();
            if worst > max_context {
                return Err(Error::InvalidConfig(format!(
                    "sequence {i}: prefix ({}) + target_len ({}) + draft depth ({}) \
                     exceeds the model context limit {max_context}",
                    prefix.len(),
                    self.target_len,
                    self.kconfig.depth()
                )));
            }
        }
        Ok(())
    }
}

/// Elapsed time of a run, in the executing mode's clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WallClock {
    /// Virtual ticks (deterministic).
    Ticks(u64),
    /// Wall-clock seconds (informational; varies between runs).
    Seconds(f64),
}

/// Aggregate counters of one scheduled run, recomputed from its validated
/// trace rather than trusted from the executor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Verification rounds across all sequences.
    pub rounds: u64,
    /// Candidate tokens drafted, counting the full per-round budget.
    pub drafted_tokens: u64,
    /// Draft tokens the verifier accepted (correction tokens excluded).
    pub accepted_tokens: u64,
    /// Tokens emitted by verification rounds, before end-of-sequence
    /// truncation.
    pub emitted_tokens: u64,
    /// Tokens actually committed into responses.
    pub response_tokens: u64,
    /// Makespan of the run.
    pub wall: WallClock,
}

impl RunMetrics {
    /// Fraction of drafted tokens that were accepted.
    pub fn acceptance_rate(&self) -> f64 {
        if self.drafted_tokens == 0 {
            0.0
        } else {
            self.accepted_tokens as f64 / self.drafted_tokens as f64
        }
    }
}

/// Everything a scheduled run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Decoded new tokens per sequence, without prefixes.
    pub responses: Vec<Vec<TokenId>>,
    /// The run's event trace; already validated.
    pub trace: ScheduleTrace,
    pub metrics: RunMetrics,
}

/// Runs a scheduled decode in the configured mode.
///
/// The returned trace has passed structural validation, and the metrics
/// are derived from that validation, not from executor-internal counters.
pub fn run(models: &ModelPair, config: &RunConfig) -> Result<RunOutput> {
    config.validate(models)?;
    let (responses, trace) = match config.mode {
        SchedMode::VirtualTime => run_virtual(models, config)?,
        SchedMode::Threaded => threaded::run_threaded(models, config)?,
    };
    let summary = trace.validate()?;
    let wall = match trace.meta.time_unit {
        TimeUnit::Ticks => WallClock::Ticks(summary.makespan),
        TimeUnit::Micros => WallClock::Seconds(summary.makespan as f64 / 1e6),
    };
    let metrics = RunMetrics {
        rounds: summary.total_rounds(),
        drafted_tokens: summary.total_rounds() * u64::from(trace.meta.k),
        accepted_tokens: summary.total_accepted(),
        emitted_tokens: summary.total_emitted(),
        response_tokens: responses.iter().map(|r| r.len() as u64).sum(),
        wall,
    };
    Ok(RunOutput {
        responses,
        trace,
        metrics,
    })
}

/// Builds the per-sequence runners a run starts from.
pub(crate) fn build_runners(config: &RunConfig) -> Vec<SeqRunner> {
    config
        .prefixes
        .iter()
        .enumerate()
        .map(|(i, prefix)| {
            SeqRunner::new(config.seed, i as u32, prefix.clone(), config.target_len)
        })
        .collect()
}

/// [`RoundProvider`] that performs real model rounds and prices them with
/// [`TickParams`].
struct ModelProvider<'a> {
    models: &'a ModelPair,
    config: &'a RunConfig,
    runners: Vec<SeqRunner>,
    pending: Vec<Option<DraftResult>>,
    timing: Vec<RngStream>,
}

impl<'a> ModelProvider<'a> {
    fn new(models: &'a ModelPair, config: &'a RunConfig) -> Self {
        let runners = build_runners(config);
        let n = runners.len();
        let timing = (0..n)
            .map(|i| RngStream::new(config.seed, StreamId::new(i as u32, Phase::Timing)))
            .collect();
        ModelProvider {
            models,
            config,
            runners,
            pending: vec![None; n],
            timing,
        }
    }

    fn into_responses(self) -> Vec<Vec<TokenId>> {
        self.runners
            .into_iter()
            .map(|r| r.state.response().to_vec())
            .collect()
    }
}

impl RoundProvider for ModelProvider<'_> {
    fn sequence_count(&self) -> usize {
        self.runners.len()
    }

    fn draft(&mut self, seq: usize) -> Result<ProviderDraft> {
        let drafted = self.runners[seq].draft_round(self.models, &self.config.kconfig)?;
        let nodes = drafted.tree().len() as u32;
        let ticks = self
            .config
            .ticks
            .draft_cost(seq, nodes, &mut self.timing[seq]);
        self.pending[seq] = Some(drafted);
        Ok(ProviderDraft { ticks, nodes })
    }

    fn verify(&mut self, seq: usize) -> Result<ProviderVerify> {
        let drafted = self.pending[seq]
            .take()
            .expect("verify scheduled without a pending draft");
        let apply =
            self.runners[seq].verify_round(self.models, &self.config.kconfig, &drafted)?;
        Ok(ProviderVerify {
            ticks: self.config.ticks.verify_cost(apply.rejected),
            emitted: apply.emitted,
            rejected: apply.rejected,
            done: apply.done,
        })
    }

    fn is_done(&self, seq: usize) -> bool {
        self.runners[seq].state.is_done()
    }
}

fn run_virtual(
    models: &ModelPair,
    config: &RunConfig,
) -> Result<(Vec<Vec<TokenId>>, ScheduleTrace)> {
    let mut provider = ModelProvider::new(models, config);
    let mut trace = TraceBuilder::ticks(
        config.sequence_count() as u32,
        config.kconfig.node_budget() as u32,
    );
    run_event_loop(&mut provider, &mut trace)?;
    Ok((provider.into_responses(), trace.finish()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::Model;
    use std::sync::Arc;

    fn pair() -> ModelPair {
        let target = Arc::new(Model::lookup_random(8, 23, 1.0).unwrap());
        let draft = Arc::new(Model::smoothed_uniform(Arc::clone(&target), 0.35, 1.0).unwrap());
        ModelPair::new(target, draft).unwrap()
    }

    fn config(n: usize, mode: SchedMode) -> RunConfig {
        RunConfig {
            kconfig: KConfig::chain(3).unwrap(),
            prefixes: (0..n).map(|i| vec![TokenId(i as u32 % 8)]).collect(),
            target_len: 10,
            seed: 11,
            mode,
            ticks: TickParams::default(),
        }
    }

    #[test]
    fn virtual_run_decodes_every_sequence_to_target_length() {
        let models = pair();
        let out = run(&models, &config(3, SchedMode::VirtualTime)).unwrap();
        assert_eq!(out.responses.len(), 3);
        for resp in &out.responses {
            assert_eq!(resp.len(), 10);
        }
        assert_eq!(out.metrics.response_tokens, 30);
        assert!(out.metrics.emitted_tokens >= 30);
        assert!(matches!(out.metrics.wall, WallClock::Ticks(t) if t > 0));
    }

    #[test]
    fn virtual_run_matches_serial_reference() {
        let models = pair();
        let cfg = config(4, SchedMode::VirtualTime);
        let out = run(&models, &cfg).unwrap();
        for (i, prefix) in cfg.prefixes.iter().enumerate() {
            let serial = run_serial_sequence(
                &models,
                &cfg.kconfig,
                cfg.seed,
                i as u32,
                prefix.clone(),
                cfg.target_len,
            )
            .unwrap();
            assert_eq!(out.responses[i], serial, "sequence {i} diverged");
        }
    }

    #[test]
    fn virtual_runs_are_bit_reproducible() {
        let models = pair();
        let cfg = config(3, SchedMode::VirtualTime);
        let a = run(&models, &cfg).unwrap();
        let b = run(&models, &cfg).unwrap();
        assert_eq!(a.responses, b.responses);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn metrics_counters_are_consistent() {
        let models = pair();
        let out = run(&models, &config(2, SchedMode::VirtualTime)).unwrap();
        let m = &out.metrics;
        assert_eq!(m.drafted_tokens, m.rounds * 3);
        assert!(m.accepted_tokens <= m.drafted_tokens);
        // Every round emits at least one token.
        assert!(m.emitted_tokens >= m.rounds);
        assert!(m.acceptance_rate() > 0.0 && m.acceptance_rate() <= 1.0);
    }

    #[test]
    fn draft_jitter_changes_timing_but_not_output() {
        let models = pair();
        let mut cfg = config(2, SchedMode::VirtualTime);
        let plain = run(&models, &cfg).unwrap();
        cfg.ticks.draft_jitter = 4;
        let jittered = run(&models, &cfg).unwrap();
        assert_eq!(plain.responses, jittered.responses);
        assert_ne!(
            plain.trace.events, jittered.trace.events,
            "jitter of 4 ticks should shift some event time"
        );
    }

    #[test]
    fn per_seq_draft_slows_one_drafter() {
        let models = pair();
        let mut cfg = config(2, SchedMode::VirtualTime);
        let base = run(&models, &cfg).unwrap();
        cfg.ticks.per_seq_draft = Some(vec![1, 20]);
        let skewed = run(&models, &cfg).unwrap();
        assert_eq!(base.responses, skewed.responses);
        let (WallClock::Ticks(fast), WallClock::Ticks(slow)) =
            (base.metrics.wall, skewed.metrics.wall)
        else {
            panic!("virtual runs report ticks");
        };
        assert!(slow > fast);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let models = pair();
        let mut cfg = config(2, SchedMode::VirtualTime);
        cfg.prefixes.clear();
        assert!(matches!(
            run(&models, &cfg).unwrap_err(),
            Error::InvalidConfig(_)
        ));

        let mut cfg = config(2, SchedMode::VirtualTime);
        cfg.target_len = 0;
        assert!(matches!(
            run(&models, &cfg).unwrap_err(),
            Error::InvalidConfig(_)
        ));

        let mut cfg = config(2, SchedMode::VirtualTime);
        cfg.ticks.per_seq_draft = Some(vec![1]);
        assert!(matches!(
            run(&models, &cfg).unwrap_err(),
            Error::InvalidConfig(_)
        ));

        let mut cfg = config(2, SchedMode::VirtualTime);
        cfg.target_len = 4000;
        assert!(matches!(
            run(&models, &cfg).unwrap_err(),
            Error::InvalidConfig(_)
        ));
    }

    #[test]
    fn run_config_round_trips_through_json() {
        let cfg = config(2, SchedMode::Threaded);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn run_config_defaults_apply_when_fields_are_omitted() {
        let json = r#"{
            "kconfig": [2, 1],
            "prefixes": [[0], [1, 2]],
            "target_len": 5,
            "seed": 7
        }"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.mode, SchedMode::VirtualTime);
        assert_eq!(cfg.ticks, TickParams::default());
        assert_eq!(cfg.kconfig.depth(), 2);
    }
}
