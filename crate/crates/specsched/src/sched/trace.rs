//! Schedule traces: the event log every execution mode emits, and the
//! independent validator that re-checks scheduling invariants from the log
//! alone.

use std::io::{BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a trace event records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// A drafter began drafting a round.
    DraftStart,
    /// A drafter finished drafting.
    DraftEnd,
    /// A verify request joined the FCFS queue.
    Enqueue,
    /// The verifier took a request off the queue.
    Dequeue,
    /// Verification finished with the full draft accepted.
    VerifyEnd,
    /// Verification finished at a rejection, emitting a correction token.
    ResampleEnd,
    /// The sequence reached its target length.
    SequenceDone,
}

/// Which worker produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Actor {
    /// Drafter worker for one sequence.
    Drafter { worker: u32 },
    /// The single verifier.
    Verifier,
}

/// One scheduling event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Virtual ticks or elapsed microseconds, depending on the trace's unit.
    pub time: u64,
    pub actor: Actor,
    pub kind: EventKind,
    /// Sequence the event belongs to.
    pub seq: u32,
    /// Tokens the event accounts for: drafted nodes for `DraftEnd`, emitted
    /// tokens (accepted plus any correction) for `VerifyEnd`/`ResampleEnd`,
    /// zero otherwise.
    pub tokens: u32,
}

/// Unit of the `time` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeUnit {
    /// Deterministic virtual ticks.
    Ticks,
    /// Wall-clock microseconds since the run started.
    Micros,
}

/// Trace-level metadata needed to validate and replay a trace on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub time_unit: TimeUnit,
    /// Number of sequences in the run.
    pub n: u32,
    /// Draft depth `k` of the run's fan-out config.
    pub k: u32,
}

/// A complete schedule trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub meta: TraceMeta,
    pub events: Vec<TraceEvent>,
    pub warnings: Vec<String>,
}

/// One line of the JSONL trace format.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum TraceLine {
    Meta(TraceMeta),
    Event(TraceEvent),
    Warning(String),
}

impl ScheduleTrace {
    /// Writes the trace as JSONL: a meta line, one line per event, then one
    /// line per warning.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let meta = serde_json::to_string(&TraceLine::Meta(self.meta))?;
        writeln!(out, "{meta}")?;
        for &event in &self.events {
            writeln!(out, "{}", serde_json::to_string(&TraceLine::Event(event))?)?;
        }
        for warning in &self.warnings {
            writeln!(
                out,
                "{}",
                serde_json::to_string(&TraceLine::Warning(warning.clone()))?
            )?;
        }
        Ok(())
    }

    /// Reads a trace previously written by [`ScheduleTrace::write_jsonl`].
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut meta = None;
        let mut events = Vec::new();
        let mut warnings = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TraceLine>(&line)? {
                TraceLine::Meta(m) => {
                    if meta.replace(m).is_some() {
                        return Err(Error::TraceViolation(
                            "trace contains more than one meta line".into(),
                        ));
                    }
                }
                TraceLine::Event(e) => events.push(e),
                TraceLine::Warning(w) => warnings.push(w),
            }
        }
        let meta = meta.ok_or_else(|| {
            Error::TraceViolation("trace is missing its meta line".into())
        })?;
        Ok(ScheduleTrace {
            meta,
            events,
            warnings,
        })
    }

    /// Validates the structural invariants of the schedule and reduces the
    /// trace to summary statistics. This is a pure reduction over the event
    /// list — it shares no state with the executors that emitted it.
    ///
    /// Checked invariants:
    /// - event times are non-decreasing in log order;
    /// - FCFS: requests are dequeued in exactly the order they were
    ///   enqueued, and every enqueued request is eventually dequeued;
    /// - the single verifier serves disjoint intervals (a new dequeue only
    ///   after the previous verification ended);
    /// - per sequence, events follow the round state machine
    ///   `draft-start, draft-end, enqueue, dequeue, (verify-end |
    ///   resample-end)` repeated, then `sequence-done` — in particular a
    ///   sequence never drafts while it has a round in flight;
    /// - liveness: every sequence finishes exactly once, and requests
    ///   arriving for a finished sequence are dropped (warned) rather than
    ///   verified;
    /// - actor attribution matches the event kind.
    pub fn validate(&self) -> Result<TraceSummary> {
        let n = self.meta.n as usize;
        let mut last_time = 0u64;
        let mut enqueue_order: Vec<u32> = Vec::new();
        let mut dequeue_order: Vec<u32> = Vec::new();
        let mut verifier: Option<(u32, u64)> = None;
        let mut busy = 0u64;
        let mut seq_state: Vec<SeqPhase> = vec![SeqPhase::Idle; n];
        let mut pending_requests: Vec<u32> = vec![0; n];
        let mut rounds: Vec<u32> = vec![0; n];
        let mut emitted: Vec<u64> = vec![0; n];
        let mut accepted: Vec<u64> = vec![0; n];
        let mut done_count: Vec<u32> = vec![0; n];
        let mut dropped = 0u32;

        for (idx, ev) in self.events.iter().enumerate() {
            let fail = |msg: String| Err(Error::TraceViolation(format!("event {idx}: {msg}")));
            if ev.time < last_time {
                return fail(format!(
                    "time {} precedes previous event time {last_time}",
                    ev.time
                ));
            }
            last_time = ev.time;
            let seq = ev.seq as usize;
            if seq >= n {
                return fail(format!("sequence {} out of range for n = {n}", ev.seq));
            }
            match ev.kind {
                EventKind::DraftStart | EventKind::DraftEnd | EventKind::Enqueue => {
                    if ev.actor != (Actor::Drafter { worker: ev.seq }) {
                        return fail(format!(
                            "{:?} must come from drafter {} but came from {:?}",
                            ev.kind, ev.seq, ev.actor
                        ));
                    }
                }
                _ => {
                    if ev.actor != Actor::Verifier {
                        return fail(format!(
                            "{:?} must come from the verifier but came from {:?}",
                            ev.kind, ev.actor
                        ));
                    }
                }
            }
            match ev.kind {
                EventKind::DraftStart => match seq_state[seq] {
                    SeqPhase::Idle => seq_state[seq] = SeqPhase::Drafting,
                    ref s => {
                        return fail(format!("draft-start for sequence {seq} while {s:?}"))
                    }
                },
                EventKind::DraftEnd => match seq_state[seq] {
                    SeqPhase::Drafting => seq_state[seq] = SeqPhase::Drafted,
                    ref s => return fail(format!("draft-end for sequence {seq} while {s:?}")),
                },
                EventKind::Enqueue => {
                    match seq_state[seq] {
                        SeqPhase::Drafted => seq_state[seq] = SeqPhase::Queued,
                        // A request enqueued for a finished sequence is the
                        // defensive drop-rule scenario; it must be dequeued
                        // and dropped, never verified.
                        SeqPhase::Done => {}
                        ref s => {
                            return fail(format!("enqueue for sequence {seq} while {s:?}"))
                        }
                    }
                    enqueue_order.push(ev.seq);
                    pending_requests[seq] += 1;
                }
                EventKind::Dequeue => {
                    if let Some((busy_seq, _)) = verifier {
                        return fail(format!(
                            "dequeue of sequence {seq} while verifier still serves {busy_seq}"
                        ));
                    }
                    if pending_requests[seq] == 0 {
                        return fail(format!(
                            "dequeue of sequence {seq} with no pending request"
                        ));
                    }
                    pending_requests[seq] -= 1;
                    dequeue_order.push(ev.seq);
                    match seq_state[seq] {
                        SeqPhase::Queued => {
                            seq_state[seq] = SeqPhase::Verifying;
                            verifier = Some((ev.seq, ev.time));
                        }
                        // Dropped request: sequence already done, verifier
                        // discards it without opening a service interval.
                        SeqPhase::Done => dropped += 1,
                        ref s => {
                            return fail(format!("dequeue for sequence {seq} while {s:?}"))
                        }
                    }
                }
                EventKind::VerifyEnd | EventKind::ResampleEnd => {
                    match verifier.take() {
                        Some((busy_seq, start)) if busy_seq == ev.seq => {
                            busy += ev.time - start;
                        }
                        Some((busy_seq, _)) => {
                            return fail(format!(
                                "round end for sequence {seq} while verifier serves {busy_seq}"
                            ))
                        }
                        None => {
                            return fail(format!(
                                "round end for sequence {seq} with no verification in progress"
                            ))
                        }
                    }
                    match seq_state[seq] {
                        SeqPhase::Verifying => seq_state[seq] = SeqPhase::Idle,
                        ref s => {
                            return fail(format!("round end for sequence {seq} while {s:?}"))
                        }
                    }
                    if ev.tokens == 0 {
                        return fail(format!("round for sequence {seq} emitted no tokens"));
                    }
                    if ev.kind == EventKind::VerifyEnd && ev.tokens > self.meta.k {
                        return fail(format!(
                            "verify-end emitted {} tokens, more than draft depth {}",
                            ev.tokens, self.meta.k
                        ));
                    }
                    if ev.kind == EventKind::ResampleEnd && ev.tokens > self.meta.k {
                        return fail(format!(
                            "resample-end emitted {} tokens from a depth-{} draft",
                            ev.tokens, self.meta.k
                        ));
                    }
                    rounds[seq] += 1;
                    emitted[seq] += u64::from(ev.tokens);
                    // A full acceptance accepted all k drafted tokens; a
                    // rejection accepted everything emitted except the
                    // correction token.
                    accepted[seq] += if ev.kind == EventKind::VerifyEnd {
                        u64::from(ev.tokens)
                    } else {
                        u64::from(ev.tokens) - 1
                    };
                }
                EventKind::SequenceDone => match seq_state[seq] {
                    SeqPhase::Idle if rounds[seq] > 0 => {
                        seq_state[seq] = SeqPhase::Done;
                        done_count[seq] += 1;
                    }
                    ref s => {
                        return fail(format!(
                            "sequence-done for sequence {seq} while {s:?} after {} rounds",
                            rounds[seq]
                        ))
                    }
                },
            }
        }

        if let Some((seq, _)) = verifier {
            return Err(Error::TraceViolation(format!(
                "trace ends with the verifier still serving sequence {seq}"
            )));
        }
        for (seq, &count) in done_count.iter().enumerate() {
            if count != 1 {
                return Err(Error::TraceViolation(format!(
                    "sequence {seq} finished {count} times, expected exactly once"
                )));
            }
        }
        for (seq, &pending) in pending_requests.iter().enumerate() {
            if pending != 0 {
                return Err(Error::TraceViolation(format!(
                    "sequence {seq} left {pending} requests queued forever"
                )));
            }
        }
        if dequeue_order != enqueue_order {
            return Err(Error::TraceViolation(format!(
                "dequeue order {dequeue_order:?} differs from FCFS enqueue order \
                 {enqueue_order:?}"
            )));
        }
        let makespan = self.events.last().map_or(0, |e| e.time);
        Ok(TraceSummary {
            rounds,
            emitted,
            accepted,
            dropped_requests: dropped,
            verifier_busy: busy,
            makespan,
        })
    }
}

/// Per-sequence position in the round state machine, used by the validator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SeqPhase {
    Idle,
    Drafting,
    Drafted,
    Queued,
    Verifying,
    Done,
}

/// Statistics reduced from a validated trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSummary {
    /// Verification rounds per sequence.
    pub rounds: Vec<u32>,
    /// Tokens emitted per sequence (before any end-of-sequence truncation).
    pub emitted: Vec<u64>,
    /// Accepted draft tokens per sequence.
    pub accepted: Vec<u64>,
    /// Requests dropped because their sequence had already finished.
    pub dropped_requests: u32,
    /// Total ticks (or microseconds) the verifier spent serving requests.
    pub verifier_busy: u64,
    /// Time of the last event.
    pub makespan: u64,
}

impl TraceSummary {
    pub fn total_rounds(&self) -> u64 {
        self.rounds.iter().map(|&r| u64::from(r)).sum()
    }

    pub fn total_emitted(&self) -> u64 {
        self.emitted.iter().sum()
    }

    pub fn total_accepted(&self) -> u64 {
        self.accepted.iter().sum()
    }

    /// Verifier idle time; busy plus idle equals the makespan exactly.
    pub fn verifier_idle(&self) -> u64 {
        self.makespan - self.verifier_busy
    }
}

/// Incrementally builds a trace during a run.
pub(crate) struct TraceBuilder {
    meta: TraceMeta,
    events: Vec<TraceEvent>,
    warnings: Vec<String>,
    origin: Option<Instant>,
}

impl TraceBuilder {
    /// Builder for virtual-time traces; events carry explicit tick times.
    pub fn ticks(n: u32, k: u32) -> Self {
        TraceBuilder {
            meta: TraceMeta {
                time_unit: TimeUnit::Ticks,
                n,
                k,
            },
            events: Vec::new(),
            warnings: Vec::new(),
            origin: None,
        }
    }

    /// Builder for wall-clock traces; events are stamped with microseconds
    /// elapsed since this call.
    pub fn wall_clock(n: u32, k: u32) -> Self {
        TraceBuilder {
            meta: TraceMeta {
                time_unit: TimeUnit::Micros,
                n,
                k,
            },
            events: Vec::new(),
            warnings: Vec::new(),
            origin: Some(Instant::now()),
        }
    }

    /// Records an event at an explicit virtual time.
    pub fn push_at(&mut self, time: u64, actor: Actor, kind: EventKind, seq: u32, tokens: u32) {
        debug_assert_eq!(self.meta.time_unit, TimeUnit::Ticks);
        self.events.push(TraceEvent {
            time,
            actor,
            kind,
            seq,
            tokens,
        });
    }

    /// Records an event stamped with the current elapsed wall time.
    pub fn push_now(&mut self, actor: Actor, kind: EventKind, seq: u32, tokens: u32) {
        let origin = self.origin.expect("wall-clock builder");
        let time = origin.elapsed().as_micros() as u64;
        // The monotonic clock can report equal micros for back-to-back
        // events; never let an earlier-logged event appear later in time.
        let time = self.events.last().map_or(time, |e| time.max(e.time));
        self.events.push(TraceEvent {
            time,
            actor,
            kind,
            seq,
            tokens,
        });
    }

    pub fn warn(&mut self, warning: impl Into<String>) {
        self.warnings.push(warning.into());
    }

    pub fn finish(self) -> ScheduleTrace {
        ScheduleTrace {
            meta: self.meta,
            events: self.events,
            warnings: self.warnings,
        }
    }
}
