//! Derived measurements over runs, traces, and tree builds.
//!
//! Everything here recomputes from primary records — validated traces and
//! per-run counters — rather than trusting executor-internal bookkeeping,
//! and pins the rounding conventions reports use: throughputs to two
//! decimals, speedups to three.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sched::ScheduleTrace;
use crate::tot::{Component, ComponentRun};

/// Rounds half away from zero at the given number of decimals.
pub fn round_decimals(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

/// Decoding throughput in tokens per second, rounded to two decimals.
pub fn tokens_per_second(tokens: u64, seconds: f64) -> f64 {
    round_decimals(tokens as f64 / seconds, 2)
}

/// Speedup of a system over a baseline given their token rates, rounded
/// to three decimals.
pub fn compute_speedup(system_rate: f64, baseline_rate: f64) -> f64 {
    round_decimals(system_rate / baseline_rate, 3)
}

/// Per-token acceptance rate recomputed from a trace: accepted draft
/// tokens over drafted tokens, where every round drafts the full
/// per-round budget `k` recorded in the trace metadata.
///
/// The trace is validated first, so the counts entering the ratio are the
/// validator's own recomputation from round-end events.
pub fn alpha_from_trace(trace: &ScheduleTrace) -> Result<f64> {
    let summary = trace.validate()?;
    let drafted = summary.total_rounds() * u64::from(trace.meta.k);
    Ok(summary.total_accepted() as f64 / drafted as f64)
}

/// Summed counters of a group of scheduled runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentTotals {
    pub runs: u64,
    pub rounds: u64,
    pub drafted_tokens: u64,
    pub accepted_tokens: u64,
    pub emitted_tokens: u64,
    pub response_tokens: u64,
}

impl ComponentTotals {
    fn add(&mut self, run: &ComponentRun) {
        self.runs += 1;
        self.rounds += run.metrics.rounds;
        self.drafted_tokens += run.metrics.drafted_tokens;
        self.accepted_tokens += run.metrics.accepted_tokens;
        self.emitted_tokens += run.metrics.emitted_tokens;
        self.response_tokens += run.metrics.response_tokens;
    }

    /// Fraction of drafted tokens accepted across the group.
    pub fn acceptance_rate(&self) -> f64 {
        if self.drafted_tokens == 0 {
            0.0
        } else {
            self.accepted_tokens as f64 / self.drafted_tokens as f64
        }
    }
}

/// Tree-build accounting split by what the scheduled runs were for.
///
/// The final answer is generation work, so it lands in the generation
/// bucket alongside per-level thought drafting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSplit {
    /// Thought generation plus the final answer.
    pub generation: ComponentTotals,
    /// Candidate-state evaluation.
    pub evaluation: ComponentTotals,
}

impl ComponentSplit {
    pub fn total_response_tokens(&self) -> u64 {
        self.generation.response_tokens + self.evaluation.response_tokens
    }
}

/// Buckets a tree build's scheduled runs into generation and evaluation
/// work.
pub fn component_split(runs: &[ComponentRun]) -> ComponentSplit {
    let mut split = ComponentSplit::default();
    for run in runs {
        match run.component {
            Component::ThoughtGen | Component::Final => split.generation.add(run),
            Component::Eval => split.evaluation.add(run),
        }
    }
    split
}
