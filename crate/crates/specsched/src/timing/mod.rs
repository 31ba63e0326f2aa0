//! Discrete-event comparison of decoding strategies under one cost model.
//!
//! The simulator prices four ways of decoding `n` sequences of `l` tokens
//! and reports makespan, target-model utilization, and throughput:
//!
//! * [`Strategy::Serial`] — plain autoregressive decoding on one target
//!   instance, `target_ar` ticks per token; the baseline for speedups.
//! * [`Strategy::SerialSd`] — speculative decoding, one sequence at a
//!   time: the target instance idles while the drafter works.
//! * [`Strategy::ScheduledSd`] — speculative decoding with `n` drafters
//!   sharing the target instance through the FCFS schedule; drafting
//!   overlaps verification of other sequences.
//! * [`Strategy::Parallel`] — `n` target instances, each running
//!   speculative decoding on its own sequence; buys latency with hardware.
//!
//! Rounds are driven by a per-token acceptance probability `alpha` instead
//! of real models. Every strategy draws acceptance outcomes from the same
//! per-sequence streams (common random numbers), so two strategies at the
//! same parameters decode identical round sequences and their makespans
//! are directly comparable, point by point — scheduled speculative
//! decoding can be shown to dominate serial speculative decoding
//! path-wise, not merely on average.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{Phase, RngStream, StreamId};
use crate::sched::virtual_time::{
    run_event_loop, ProviderDraft, ProviderVerify, RoundProvider,
};
use crate::sched::{TickParams, TraceBuilder};

/// One simulated decoding workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    /// Number of sequences to decode.
    pub sequences: usize,
    /// New tokens per sequence.
    pub target_len: usize,
    /// Tokens per drafted chain.
    pub draft_depth: usize,
    /// Probability that the target accepts any single drafted token.
    pub alpha: f64,
    #[serde(default)]
    pub ticks: TickParams,
    pub seed: u64,
}

impl TimingParams {
    fn validate(&self) -> Result<()> {
        if self.sequences == 0 || self.target_len == 0 || self.draft_depth == 0 {
            return Err(Error::InvalidConfig(
                "sequences, target_len and draft_depth must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        self.ticks.validate_for(self.sequences)
    }
}

/// A decoding strategy the simulator can price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Serial,
    SerialSd,
    ScheduledSd,
    Parallel,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Serial,
        Strategy::SerialSd,
        Strategy::ScheduledSd,
        Strategy::Parallel,
    ];

    /// Stable name used in reports and CSV output.
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Serial => "serial",
            Strategy::SerialSd => "serial-sd",
            Strategy::ScheduledSd => "scheduled-sd",
            Strategy::Parallel => "parallel",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What one strategy costs on one workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    /// Ticks until the last sequence finishes.
    pub makespan: u64,
    /// Ticks the target model spent computing, summed over instances.
    pub target_busy_ticks: u64,
    /// Target-model instances the strategy provisions.
    pub target_instances: u32,
    /// Decoded tokens per tick of makespan.
    pub tokens_per_tick: f64,
}

impl StrategyResult {
    /// Fraction of provisioned target-model time spent computing.
    pub fn target_busy_fraction(&self) -> f64 {
        if self.makespan == 0 {
            0.0
        } else {
            self.target_busy_ticks as f64
                / (self.makespan as f64 * f64::from(self.target_instances))
        }
    }
}

/// Round outcomes driven by coin flips at the configured acceptance rate.
///
/// Sequence `s` of the provider maps to global sequence id `ids[s]`, so a
/// single-sequence provider for sequence 3 draws from exactly the streams
/// the full scheduled run would use for it — the common-random-numbers
/// discipline behind path-wise strategy comparisons.
struct AlphaProvider<'a> {
    params: &'a TimingParams,
    ids: Vec<u32>,
    accept: Vec<RngStream>,
    timing: Vec<RngStream>,
    emitted: Vec<usize>,
    rounds: Vec<u64>,
}

impl<'a> AlphaProvider<'a> {
    fn new(params: &'a TimingParams, ids: Vec<u32>) -> Self {
        let accept = ids
            .iter()
            .map(|&i| RngStream::new(params.seed, StreamId::new(i, Phase::Verify)))
            .collect();
        let timing = ids
            .iter()
            .map(|&i| RngStream::new(params.seed, StreamId::new(i, Phase::Timing)))
            .collect();
        let n = ids.len();
        AlphaProvider {
            params,
            ids,
            accept,
            timing,
            emitted: vec![0; n],
            rounds: vec![0; n],
        }
    }

    fn total_rounds(&self) -> u64 {
        self.rounds.iter().sum()
    }
}

impl RoundProvider for AlphaProvider<'_> {
    fn sequence_count(&self) -> usize {
        self.ids.len()
    }

    fn draft(&mut self, seq: usize) -> Result<ProviderDraft> {
        let nodes = self.params.draft_depth as u32;
        let ticks =
            self.params
                .ticks
                .draft_cost(self.ids[seq] as usize, nodes, &mut self.timing[seq]);
        Ok(ProviderDraft { ticks, nodes })
    }

    fn verify(&mut self, seq: usize) -> Result<ProviderVerify> {
        let mut accepted = 0u32;
        let mut rejected = false;
        for _ in 0..self.params.draft_depth {
            if self.accept[seq].next_f64() < self.params.alpha {
                accepted += 1;
            } else {
                rejected = true;
                break;
            }
        }
        let emitted = accepted + u32::from(rejected);
        self.emitted[seq] += emitted as usize;
        self.rounds[seq] += 1;
        Ok(ProviderVerify {
            ticks: self.params.ticks.verify_cost(rejected),
            emitted,
            rejected,
            done: self.emitted[seq] >= self.params.target_len,
        })
    }

    fn is_done(&self, seq: usize) -> bool {
        self.emitted[seq] >= self.params.target_len
    }
}

/// Runs the event loop for the given sequence ids and returns
/// `(makespan, busy ticks, rounds)`.
fn simulate_scheduled(params: &TimingParams, ids: Vec<u32>) -> Result<(u64, u64, u64)> {
    let mut provider = AlphaProvider::new(params, ids);
    let mut trace = TraceBuilder::ticks(
        provider.sequence_count() as u32,
        params.draft_depth as u32,
    );
    let stats = run_event_loop(&mut provider, &mut trace)?;
    debug_assert!(trace.finish().validate().is_ok());
    Ok((stats.makespan, stats.verifier_busy, provider.total_rounds()))
}

/// Prices one strategy on one workload.
pub fn simulate(params: &TimingParams, strategy: Strategy) -> Result<StrategyResult> {
    params.validate()?;
    let n = params.sequences;
    let total_tokens = (n * params.target_len) as u64;
    let (makespan, busy, instances) = match strategy {
        Strategy::Serial => {
            let span = total_tokens * params.ticks.target_ar;
            (span, span, 1)
        }
        Strategy::SerialSd => {
            // One sequence at a time on a single target instance: the
            // sequential composition of per-sequence schedules.
            let mut span = 0;
            let mut busy = 0;
            for i in 0..n as u32 {
                let (m, b, _) = simulate_scheduled(params, vec![i])?;
                span += m;
                busy += b;
            }
            (span, busy, 1)
        }
        Strategy::ScheduledSd => {
            let (m, b, _) = simulate_scheduled(params, (0..n as u32).collect())?;
            (m, b, 1)
        }
        Strategy::Parallel => {
            // Each sequence gets a private target instance; they run
            // concurrently and independently.
            let mut span = 0;
            let mut busy = 0;
            for i in 0..n as u32 {
                let (m, b, _) = simulate_scheduled(params, vec![i])?;
                span = span.max(m);
                busy += b;
            }
            (span, busy, n as u32)
        }
    };
    Ok(StrategyResult {
        strategy,
        makespan,
        target_busy_ticks: busy,
        target_instances: instances,
        tokens_per_tick: total_tokens as f64 / makespan as f64,
    })
}

/// Grid of workloads to price with every strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub sequence_counts: Vec<usize>,
    pub draft_depths: Vec<usize>,
    pub target_len: usize,
    #[serde(default)]
    pub ticks: TickParams,
    pub seed: u64,
}

/// One line of a sweep report: a strategy priced at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: Strategy,
    pub alpha: f64,
    pub sequences: usize,
    pub draft_depth: usize,
    pub target_len: usize,
    pub makespan: u64,
    pub target_busy_fraction: f64,
    pub tokens_per_tick: f64,
    /// Serial makespan divided by this strategy's makespan at the same
    /// grid point.
    pub speedup_vs_serial: f64,
}

/// Prices every strategy at every grid point.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &alpha in &config.alphas {
        for &n in &config.sequence_counts {
            for &k in &config.draft_depths {
                let params = TimingParams {
                    sequences: n,
                    target_len: config.target_len,
                    draft_depth: k,
                    alpha,
                    ticks: config.ticks.clone(),
                    seed: config.seed,
                };
                let serial_span = simulate(&params, Strategy::Serial)?.makespan;
                for strategy in Strategy::ALL {
                    let result = simulate(&params, strategy)?;
                    rows.push(SweepRow {
                        strategy,
                        alpha,
                        sequences: n,
                        draft_depth: k,
                        target_len: config.target_len,
                        makespan: result.makespan,
                        target_busy_fraction: result.target_busy_fraction(),
                        tokens_per_tick: result.tokens_per_tick,
                        speedup_vs_serial: serial_span as f64 / result.makespan as f64,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Writes sweep rows as CSV with a header line.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(
        out,
        "strategy,alpha,sequences,draft_depth,target_len,makespan,\
         target_busy_fraction,tokens_per_tick,speedup_vs_serial"
    )?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6}",
            row.strategy,
            row.alpha,
            row.sequences,
            row.draft_depth,
            row.target_len,
            row.makespan,
            row.target_busy_fraction,
            row.tokens_per_tick,
            row.speedup_vs_serial
        )?;
    }
    Ok(())
}
