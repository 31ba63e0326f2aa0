//! Deterministic discrete-event execution of the drafter/verifier schedule.
//!
//! The event loop is generic over a [`RoundProvider`] so two consumers can
//! share one scheduling semantics: the scheduler's virtual mode (rounds
//! backed by real models) and the timing simulator (rounds backed by
//! service-time draws). Events at equal virtual times are ordered verifier
//! first, then by lowest sequence index — the documented tie-break that
//! pins down a unique schedule.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::sched::trace::{Actor, EventKind, TraceBuilder};

/// Outcome of one verification the provider performed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ProviderVerify {
    /// Verifier service time in ticks.
    pub ticks: u64,
    /// Tokens the round emitted (pre-truncation).
    pub emitted: u32,
    /// Whether the round ended at a rejection (service includes a resample).
    pub rejected: bool,
    /// Whether the sequence is now finished.
    pub done: bool,
}

/// Result of performing one draft.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ProviderDraft {
    /// Drafter service time in ticks.
    pub ticks: u64,
    /// Number of candidate nodes drafted, for trace accounting.
    pub nodes: u32,
}

/// The work a scheduled round consists of, supplied by the execution
/// backend; the event loop owns *when*, the provider owns *what*.
pub(crate) trait RoundProvider {
    fn sequence_count(&self) -> usize;

    /// Performs the draft work for `seq`.
    fn draft(&mut self, seq: usize) -> Result<ProviderDraft>;

    /// Performs the verification for `seq`'s pending draft.
    fn verify(&mut self, seq: usize) -> Result<ProviderVerify>;

    /// Whether the sequence needs no further rounds.
    fn is_done(&self, seq: usize) -> bool;
}

/// Aggregate timing facts the loop observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct EventLoopStats {
    pub makespan: u64,
    pub verifier_busy: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum PendingKind {
    // Variant order is the tie-break rank: verifier events precede drafter
    // events at equal times.
    VerifyEnd,
    DraftEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    time: u64,
    kind: PendingKind,
    seq: u32,
}

/// Runs the drafter/verifier schedule to completion in virtual time.
///
/// Every sequence starts drafting at tick 0. A finished draft enqueues a
/// verify request (FCFS); whenever the single verifier is idle and the
/// queue is non-empty it dequeues at the current tick with zero delay. A
/// verified round either finishes its sequence or restarts its drafter at
/// the same tick. Requests for already-finished sequences are dropped with
/// a warning. If the event queue drains while some sequence is unfinished,
/// the all-waiting deadlock detector reports it as an error.
pub(crate) fn run_event_loop<P: RoundProvider>(
    provider: &mut P,
    trace: &mut TraceBuilder,
) -> Result<EventLoopStats> {
    let n = provider.sequence_count();
    let mut heap: BinaryHeap<Reverse<Pending>> = BinaryHeap::new();
    let mut queue: VecDeque<u32> = VecDeque::new();
    let mut pending_verify: Vec<Option<ProviderVerify>> = vec![None; n];
    let mut draft_nodes: Vec<u32> = vec![0; n];
    let mut gamma: Vec<bool> = vec![true; n];
    let mut verifier_busy = false;
    let mut busy_ticks = 0u64;
    let mut makespan = 0u64;

    fn begin_draft<P: RoundProvider>(
        seq: u32,
        time: u64,
        provider: &mut P,
        heap: &mut BinaryHeap<Reverse<Pending>>,
        gamma: &mut [bool],
        draft_nodes: &mut [u32],
        trace: &mut TraceBuilder,
    ) -> Result<()> {
        debug_assert!(gamma[seq as usize], "draft started without the label");
        trace.push_at(
            time,
            Actor::Drafter { worker: seq },
            EventKind::DraftStart,
            seq,
            0,
        );
        let drafted = provider
            .draft(seq as usize)
            .map_err(|e| e.for_sequence(seq))?;
        draft_nodes[seq as usize] = drafted.nodes;
        heap.push(Reverse(Pending {
            time: time + drafted.ticks,
            kind: PendingKind::DraftEnd,
            seq,
        }));
        gamma[seq as usize] = false;
        Ok(())
    }

    for seq in 0..n as u32 {
        begin_draft(
            seq,
            0,
            provider,
            &mut heap,
            &mut gamma,
            &mut draft_nodes,
            trace,
        )?;
    }

    while let Some(Reverse(event)) = heap.pop() {
        let now = event.time;
        makespan = makespan.max(now);
        match event.kind {
            PendingKind::DraftEnd => {
                let seq = event.seq;
                trace.push_at(
                    now,
                    Actor::Drafter { worker: seq },
                    EventKind::DraftEnd,
                    seq,
                    draft_nodes[seq as usize],
                );
                trace.push_at(
                    now,
                    Actor::Drafter { worker: seq },
                    EventKind::Enqueue,
                    seq,
                    0,
                );
                queue.push_back(seq);
            }
            PendingKind::VerifyEnd => {
                let seq = event.seq;
                let outcome = pending_verify[seq as usize]
                    .take()
                    .expect("verify-end without a pending outcome");
                let kind = if outcome.rejected {
                    EventKind::ResampleEnd
                } else {
                    EventKind::VerifyEnd
                };
                trace.push_at(now, Actor::Verifier, kind, seq, outcome.emitted);
                gamma[seq as usize] = true;
                if outcome.done {
                    trace.push_at(now, Actor::Verifier, EventKind::SequenceDone, seq, 0);
                } else {
                    begin_draft(
                        seq,
                        now,
                        provider,
                        &mut heap,
                        &mut gamma,
                        &mut draft_nodes,
                        trace,
                    )?;
                }
                verifier_busy = false;
            }
        }
        // Work-conserving dequeue: an idle verifier picks up queued work at
        // the current tick with zero delay, skipping (and warning about)
        // requests whose sequence already finished.
        while !verifier_busy {
            let Some(seq) = queue.pop_front() else { break };
            trace.push_at(now, Actor::Verifier, EventKind::Dequeue, seq, 0);
            if provider.is_done(seq as usize) {
                trace.warn(format!(
                    "dropped verify request for finished sequence {seq}"
                ));
                continue;
            }
            let outcome = provider
                .verify(seq as usize)
                .map_err(|e| e.for_sequence(seq))?;
            busy_ticks += outcome.ticks;
            heap.push(Reverse(Pending {
                time: now + outcome.ticks,
                kind: PendingKind::VerifyEnd,
                seq,
            }));
            pending_verify[seq as usize] = Some(outcome);
            verifier_busy = true;
        }
    }

    let unfinished: Vec<usize> = (0..n).filter(|&s| !provider.is_done(s)).collect();
    if !unfinished.is_empty() {
        return Err(Error::Deadlock(format!(
            "event queue drained with sequences {unfinished:?} unfinished \
             (verify queue empty, draft labels {gamma:?})"
        )));
    }
    Ok(EventLoopStats {
        makespan,
        verifier_busy: busy_ticks,
    })
}
