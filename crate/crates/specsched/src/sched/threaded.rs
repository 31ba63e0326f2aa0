//! Thread-backed executor: one OS thread per drafter plus a verifier
//! thread, communicating over FIFO channels.
//!
//! Token-level behavior is identical to the virtual-time mode because both
//! drive the same [`SeqRunner`] round engine with the same RNG streams;
//! threading only decides *when* rounds happen, never *what* they produce.
//! Trace events are stamped with wall-clock time, so traces are valid but
//! not reproducible between runs.
//!
//! Ordering discipline: a drafter logs its enqueue and performs the channel
//! send while holding the trace lock, so the verifier's FIFO receive order
//! provably matches the trace's enqueue order — the FCFS invariant the
//! validator checks is enforced by construction, not by luck.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Mutex;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::lm::{ModelPair, TokenId};
use crate::sampling::DraftResult;
use crate::sched::trace::{Actor, EventKind, ScheduleTrace, TraceBuilder};
use crate::sched::{build_runners, RunConfig, SeqRunner};

/// How long a drafter waits for its verification result before declaring
/// the run wedged. Generous on purpose: real rounds take microseconds, so
/// hitting this means the verifier died or the schedule deadlocked.
const VERIFY_TIMEOUT: Duration = Duration::from_secs(10);

/// One drafted round travelling to the verifier. The drafter hands over
/// its entire sequence state and gets it back — updated — on the return
/// channel, so exactly one thread ever touches a sequence's state.
struct VerifyRequest {
    seq: u32,
    runner: SeqRunner,
    draft: DraftResult,
    ret: Sender<SeqRunner>,
}

pub(crate) fn run_threaded(
    models: &ModelPair,
    config: &RunConfig,
) -> Result<(Vec<Vec<TokenId>>, ScheduleTrace)> {
    let n = config.sequence_count();
    let trace = Mutex::new(TraceBuilder::wall_clock(
        n as u32,
        config.kconfig.node_budget() as u32,
    ));
    let (tx, rx) = mpsc::channel::<VerifyRequest>();

    let (verifier_result, drafter_results) = std::thread::scope(|scope| {
        let verifier = scope.spawn(|| verifier_loop(models, config, &trace, rx));
        let drafters: Vec<_> = build_runners(config)
            .into_iter()
            .map(|runner| {
                let tx = tx.clone();
                let trace = &trace;
                scope.spawn(move || drafter_loop(models, config, trace, tx, runner))
            })
            .collect();
        // The verifier loop runs until every sender is gone; drop the
        // original so only drafters keep the channel alive.
        drop(tx);
        let drafter_results: Vec<Result<SeqRunner>> = drafters
            .into_iter()
            .map(|h| h.join().expect("drafter thread panicked"))
            .collect();
        let verifier_result = verifier.join().expect("verifier thread panicked");
        (verifier_result, drafter_results)
    });

    // A verifier failure makes waiting drafters fail too (their return
    // channels die); report the root cause, not the knock-on timeouts.
    verifier_result?;
    let mut responses = vec![Vec::new(); n];
    for result in drafter_results {
        let runner = result?;
        let seq = runner.state.index() as usize;
        responses[seq] = runner.state.response().to_vec();
    }
    let trace = trace.into_inner().expect("trace lock poisoned").finish();
    Ok((responses, trace))
}

fn drafter_loop(
    models: &ModelPair,
    config: &RunConfig,
    trace: &Mutex<TraceBuilder>,
    tx: Sender<VerifyRequest>,
    mut runner: SeqRunner,
) -> Result<SeqRunner> {
    let seq = runner.state.index();
    let actor = Actor::Drafter { worker: seq };
    let (ret_tx, ret_rx) = mpsc::channel::<SeqRunner>();
    while !runner.state.is_done() {
        trace
            .lock()
            .expect("trace lock poisoned")
            .push_now(actor, EventKind::DraftStart, seq, 0);
        let draft = runner
            .draft_round(models, &config.kconfig)
            .map_err(|e| e.for_sequence(seq))?;
        let nodes = draft.tree().len() as u32;
        {
            let mut tr = trace.lock().expect("trace lock poisoned");
            tr.push_now(actor, EventKind::DraftEnd, seq, nodes);
            tr.push_now(actor, EventKind::Enqueue, seq, 0);
            let request = VerifyRequest {
                seq,
                runner,
                draft,
                ret: ret_tx.clone(),
            };
            if tx.send(request).is_err() {
                return Err(Error::Deadlock(format!(
                    "verifier exited before sequence {seq} could enqueue a round"
                )));
            }
        }
        runner = match ret_rx.recv_timeout(VERIFY_TIMEOUT) {
            Ok(updated) => updated,
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Deadlock(format!(
                    "verifier exited while sequence {seq} awaited its round"
                )))
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Deadlock(format!(
                    "sequence {seq} waited {VERIFY_TIMEOUT:?} for verification"
                )))
            }
        };
    }
    Ok(runner)
}

fn verifier_loop(
    models: &ModelPair,
    config: &RunConfig,
    trace: &Mutex<TraceBuilder>,
    rx: Receiver<VerifyRequest>,
) -> Result<()> {
    while let Ok(mut request) = rx.recv() {
        let seq = request.seq;
        trace
            .lock()
            .expect("trace lock poisoned")
            .push_now(Actor::Verifier, EventKind::Dequeue, seq, 0);
        if request.runner.state.is_done() {
            // Defensive drop rule: never verify a round for a finished
            // sequence. Unreachable under the ownership protocol (a
            // drafter only drafts the state it just got back), but kept
            // symmetric with the virtual-time executor.
            trace
                .lock()
                .expect("trace lock poisoned")
                .warn(format!("dropped verify request for finished sequence {seq}"));
            let _ = request.ret.send(request.runner);
            continue;
        }
        let apply = request
            .runner
            .verify_round(models, &config.kconfig, &request.draft)
            .map_err(|e| e.for_sequence(seq))?;
        {
            let mut tr = trace.lock().expect("trace lock poisoned");
            let kind = if apply.rejected {
                EventKind::ResampleEnd
            } else {
                EventKind::VerifyEnd
            };
            tr.push_now(Actor::Verifier, kind, seq, apply.emitted);
            if apply.done {
                tr.push_now(Actor::Verifier, EventKind::SequenceDone, seq, 0);
            }
        }
        // The drafter may have timed out and left; losing this send only
        // loses a sequence that already failed.
        let _ = request.ret.send(request.runner);
    }
    Ok(())
}
