//! Round-by-round simulation of the pipelined scheduling algorithm.
//!
//! Each round, the supervisor assigns one worker to every task whose window
//! contains that round. The worker first verifies outputs of recent same-task
//! workers (newest first) and adopts the first one that verifies. If none
//! does, it requests inputs from the recent workers of every preceding task
//! (or the source, for initial tasks), verifies those newest first per task,
//! and computes the task when every predecessor supplied a verified output.
//! Workers serve their result (or an error) for the next `2*delta` rounds.
//!
//! Outputs are symbolic: verification is a perfect predicate, which isolates
//! the scheduling behavior from any concrete verification mechanism. A
//! missing message is detectable and costs no verification; a garbage message
//! and a retained error each cost one failed verification when examined.

use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::splitmix64;
use crate::task_graph::{GraphError, LeveledTaskGraph, TaskGraph, TaskId};
use crate::worker_graph::{ScheduleWindow, WorkerGraph, WorkerNode};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("beta must lie in [0, 1), got {0}")]
    BetaOutOfRange(f64),
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),
    #[error("traces were produced under different assignments")]
    AssignmentMismatch,
    #[error("trace i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace record is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("trace file is malformed: {0}")]
    MalformedTrace(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Honesty label of a sampled worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Honest,
    Malicious,
}

/// Per-node honesty labels for one execution, sampled i.i.d. with
/// probability `beta` of being malicious.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    labels: Vec<Label>,
}

impl Assignment {
    /// Samples a fresh assignment. Same `(graph, beta, seed)` yields the same
    /// assignment.
    pub fn sample(wg: &WorkerGraph, beta: f64, seed: u64) -> Result<Self, SimError> {
        if !(0.0..1.0).contains(&beta) {
            return Err(SimError::BetaOutOfRange(beta));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = (0..wg.node_count())
            .map(|_| {
                if rng.gen::<f64>() < beta {
                    Label::Malicious
                } else {
                    Label::Honest
                }
            })
            .collect();
        Ok(Assignment { labels })
    }

    pub fn from_labels(labels: Vec<Label>) -> Self {
        Assignment { labels }
    }

    pub fn label(&self, index: usize) -> Label {
        self.labels[index]
    }

    pub fn is_malicious(&self, index: usize) -> bool {
        self.labels[index] == Label::Malicious
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn malicious_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l == Label::Malicious)
            .count()
    }
}

/// What a malicious worker puts on the wire for one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageContent {
    Correct,
    Garbage,
    Silent,
}

/// Message kinds a malicious worker can decide on. `SupervisorReply` is the
/// DONE/REJECT/TIMEOUT answer of the sequential legacy protocols, where a
/// correct output means DONE, garbage means REJECT, and silence a timeout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    SameTaskOutput,
    PredecessorOutput,
    TargetSubmission,
    SupervisorReply,
}

/// Recipient of a message, for per-message adversary decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipient {
    Worker(WorkerNode),
    Target,
}

/// Behavior of malicious workers. Honest workers are never governed by this.
///
/// `NeverCorrect` sends garbage everywhere: never contributing a correct
/// output is the dominant adversarial strategy, and garbage (rather than
/// silence) maximizes the verification work it inflicts. `ProbabilisticCorrect`
/// sends a correct output with probability `p` per message, otherwise garbage
/// or silence with equal probability; decisions are derived statelessly from
/// `seed` so traces are reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AdversaryStrategy {
    NeverCorrect,
    AlwaysCorrect,
    ProbabilisticCorrect { p: f64, seed: u64 },
}

impl AdversaryStrategy {
    /// Per-message decision for a malicious `sender`.
    pub fn decide(
        &self,
        sender: WorkerNode,
        recipient: Recipient,
        kind: MessageKind,
    ) -> MessageContent {
        match *self {
            AdversaryStrategy::NeverCorrect => MessageContent::Garbage,
            AdversaryStrategy::AlwaysCorrect => MessageContent::Correct,
            AdversaryStrategy::ProbabilisticCorrect { p, seed } => {
                let (rt, rr) = match recipient {
                    Recipient::Worker(w) => (w.task as u64 + 1, w.round as u64),
                    Recipient::Target => (0, 0),
                };
                let mut h = splitmix64(seed ^ splitmix64(sender.task as u64));
                h = splitmix64(h ^ sender.round as u64);
                h = splitmix64(h ^ (rt << 32) ^ rr);
                h = splitmix64(h ^ kind as u64);
                let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
                if unit < p {
                    MessageContent::Correct
                } else if h & 1 == 0 {
                    MessageContent::Garbage
                } else {
                    MessageContent::Silent
                }
            }
        }
    }

    /// Whether this strategy can ever stay silent; when it cannot, message
    /// counts follow from window sizes without per-message decisions.
    fn may_be_silent(&self) -> bool {
        matches!(self, AdversaryStrategy::ProbabilisticCorrect { .. })
    }
}

/// Outcome of one worker-graph node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    Successful,
    Failed,
    Malicious,
}

/// Global counters of one execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rounds: u32,
    pub executions_per_task: Vec<u32>,
    pub total_honest_executions: u64,
    pub total_verifications: u64,
    pub supervisor_assignments: u64,
    pub supervisor_introductions: u64,
    pub source_sends: u64,
    pub target_receives: u64,
}

/// Full record of one simulated execution: per-node outcomes and counters
/// (indexed like [`WorkerGraph::node_index`]), per-task source/target flows,
/// and global metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub labels: Vec<Label>,
    pub status: Vec<NodeStatus>,
    pub executed: Vec<bool>,
    pub verifications: Vec<u32>,
    pub messages_sent: Vec<u32>,
    pub messages_received: Vec<u32>,
    pub source_sends_per_task: Vec<u32>,
    pub target_receives_per_task: Vec<u32>,
    pub metrics: Metrics,
    pub success: bool,
}

/// Message bookkeeping for one simulation. The supervisor instructs whole
/// windows of senders at a time; per-sender sent counts accumulate in
/// per-task difference arrays so the send loops stay out of the hot path of
/// the non-silent strategies.
struct Mailroom<'a> {
    wg: &'a WorkerGraph,
    assignment: &'a Assignment,
    strategy: AdversaryStrategy,
    track_silence: bool,
    messages_received: Vec<u32>,
    sent_diff: Vec<i64>,
    introductions: u64,
}

impl Mailroom<'_> {
    /// Instructs the senders `(sender_task, lo..=hi)` to send to `recipient`
    /// and tallies the delivered messages.
    fn instruct(
        &mut self,
        sender_task: TaskId,
        lo: u32,
        hi: u32,
        recipient: WorkerNode,
        kind: MessageKind,
    ) {
        if lo > hi {
            return;
        }
        let width = (hi - lo + 1) as usize;
        self.introductions += width as u64;
        let gamma = self.wg.gamma() as usize;
        let base = sender_task as usize * (gamma + 1);
        let off = (lo - self.wg.t_min(sender_task)) as usize;
        let delivered = if self.track_silence {
            let mut count = 0u32;
            for round in lo..=hi {
                let s = WorkerNode {
                    task: sender_task,
                    round,
                };
                let silent = self.assignment.is_malicious(self.wg.node_index(s))
                    && self.strategy.decide(s, Recipient::Worker(recipient), kind)
                        == MessageContent::Silent;
                if !silent {
                    let slot = base + off + (round - lo) as usize;
                    self.sent_diff[slot] += 1;
                    self.sent_diff[slot + 1] -= 1;
                    count += 1;
                }
            }
            count
        } else {
            // One message per sender slot across the window.
            self.sent_diff[base + off] += 1;
            self.sent_diff[base + off + width] -= 1;
            width as u32
        };
        self.messages_received[self.wg.node_index(recipient)] += delivered;
    }

    /// Resolves the difference arrays into per-node sent counts.
    fn finish(self) -> (Vec<u32>, Vec<u32>, u64) {
        let gamma = self.wg.gamma() as usize;
        let mut messages_sent = vec![0u32; self.wg.node_count()];
        for task in 0..self.wg.task_count() {
            let base = task * (gamma + 1);
            let mut acc: i64 = 0;
            for slot in 0..gamma {
                acc += self.sent_diff[base + slot];
                messages_sent[task * gamma + slot] = acc as u32;
            }
        }
        (self.messages_received, messages_sent, self.introductions)
    }
}

/// Simulates one execution of the scheduling algorithm.
pub fn simulate(
    graph: &LeveledTaskGraph,
    wg: &WorkerGraph,
    assignment: &Assignment,
    strategy: AdversaryStrategy,
) -> Result<ExecutionTrace, SimError> {
    if graph.len() != wg.task_count() {
        return Err(SimError::InconsistentInputs(format!(
            "graph has {} tasks but worker graph has {}",
            graph.len(),
            wg.task_count()
        )));
    }
    if assignment.len() != wg.node_count() {
        return Err(SimError::InconsistentInputs(format!(
            "assignment labels {} nodes but worker graph has {}",
            assignment.len(),
            wg.node_count()
        )));
    }

    let n_tasks = wg.task_count();
    let n_nodes = wg.node_count();
    let gamma = wg.gamma() as usize;

    let mut status = vec![NodeStatus::Malicious; n_nodes];
    let mut executed = vec![false; n_nodes];
    let mut verifications = vec![0u32; n_nodes];
    let mut source_sends_per_task = vec![0u32; n_tasks];
    let mut target_receives_per_task = vec![0u32; n_tasks];

    let mut mail = Mailroom {
        wg,
        assignment,
        strategy,
        track_silence: strategy.may_be_silent(),
        messages_received: vec![0u32; n_nodes],
        sent_diff: vec![0i64; n_tasks * (gamma + 1)],
        introductions: 0,
    };

    for round in 1..=wg.total_rounds() {
        for task in 0..n_tasks as TaskId {
            if round < wg.t_min(task) || round > wg.t_max(task) {
                continue;
            }
            let node = WorkerNode { task, round };
            let idx = wg.node_index(node);

            // Same-task candidates are always offered first.
            let (lo, hi) = wg.incoming_window(task, round);
            mail.instruct(task, lo, hi, node, MessageKind::SameTaskOutput);

            if assignment.is_malicious(idx) {
                // A malicious worker never adopts; it reports a verification
                // failure so the fallback instructions fire as well.
                if wg.is_initial(task) {
                    source_sends_per_task[task as usize] += 1;
                } else {
                    for &u in wg.preds(task) {
                        let (lo, hi) = wg.incoming_window(u, round);
                        mail.instruct(u, lo, hi, node, MessageKind::PredecessorOutput);
                    }
                }
                status[idx] = NodeStatus::Malicious;
                continue;
            }

            // Honest: verify same-task outputs newest first until one passes.
            let mut adopted = false;
            if lo <= hi {
                for r in (lo..=hi).rev() {
                    let sender = WorkerNode { task, round: r };
                    let sidx = wg.node_index(sender);
                    if assignment.is_malicious(sidx) {
                        match strategy.decide(
                            sender,
                            Recipient::Worker(node),
                            MessageKind::SameTaskOutput,
                        ) {
                            MessageContent::Correct => {
                                verifications[idx] += 1;
                                adopted = true;
                                break;
                            }
                            MessageContent::Garbage => verifications[idx] += 1,
                            MessageContent::Silent => {}
                        }
                    } else {
                        // An earlier honest worker serves its output, or a
                        // retained error that fails verification.
                        verifications[idx] += 1;
                        if status[sidx] == NodeStatus::Successful {
                            adopted = true;
                            break;
                        }
                    }
                }
            }
            if adopted {
                status[idx] = NodeStatus::Successful;
                continue;
            }

            if wg.is_initial(task) {
                // The reliable source supplies the input; no verification
                // needed for it.
                source_sends_per_task[task as usize] += 1;
                status[idx] = NodeStatus::Successful;
                executed[idx] = true;
                continue;
            }

            // Fallback: request inputs from every preceding task.
            let mut all_delivered = true;
            for &u in wg.preds(task) {
                let (lo, hi) = wg.incoming_window(u, round);
                mail.instruct(u, lo, hi, node, MessageKind::PredecessorOutput);
                let mut got = false;
                if lo <= hi {
                    for r in (lo..=hi).rev() {
                        let sender = WorkerNode { task: u, round: r };
                        let sidx = wg.node_index(sender);
                        if assignment.is_malicious(sidx) {
                            match strategy.decide(
                                sender,
                                Recipient::Worker(node),
                                MessageKind::PredecessorOutput,
                            ) {
                                MessageContent::Correct => {
                                    verifications[idx] += 1;
                                    got = true;
                                    break;
                                }
                                MessageContent::Garbage => verifications[idx] += 1,
                                MessageContent::Silent => {}
                            }
                        } else {
                            verifications[idx] += 1;
                            if status[sidx] == NodeStatus::Successful {
                                got = true;
                                break;
                            }
                        }
                    }
                }
                all_delivered &= got;
            }
            if all_delivered {
                status[idx] = NodeStatus::Successful;
                executed[idx] = true;
            } else {
                status[idx] = NodeStatus::Failed;
            }
        }
    }

    // Final-task workers hand their result to the target, which verifies each
    // submission at most once. Only an honest successful worker makes the
    // final task count towards overall success.
    let mut success = true;
    for task in 0..n_tasks as TaskId {
        if !wg.is_final(task) {
            continue;
        }
        let mut task_ok = false;
        for round in wg.t_min(task)..=wg.t_max(task) {
            let node = WorkerNode { task, round };
            let idx = wg.node_index(node);
            if assignment.is_malicious(idx) {
                if strategy.decide(node, Recipient::Target, MessageKind::TargetSubmission)
                    != MessageContent::Silent
                {
                    target_receives_per_task[task as usize] += 1;
                }
            } else if status[idx] == NodeStatus::Successful {
                target_receives_per_task[task as usize] += 1;
                task_ok = true;
            }
        }
        success &= task_ok;
    }

    let (messages_received, messages_sent, introductions) = mail.finish();

    let mut executions_per_task = vec![0u32; n_tasks];
    let mut total_honest_executions = 0u64;
    for task in 0..n_tasks {
        for slot in 0..gamma {
            if executed[task * gamma + slot] {
                executions_per_task[task] += 1;
                total_honest_executions += 1;
            }
        }
    }

    let metrics = Metrics {
        rounds: wg.total_rounds(),
        executions_per_task,
        total_honest_executions,
        total_verifications: verifications.iter().map(|&v| v as u64).sum(),
        supervisor_assignments: n_nodes as u64,
        supervisor_introductions: introductions,
        source_sends: source_sends_per_task.iter().map(|&v| v as u64).sum(),
        target_receives: target_receives_per_task.iter().map(|&v| v as u64).sum(),
    };

    Ok(ExecutionTrace {
        labels: assignment.labels().to_vec(),
        status,
        executed,
        verifications,
        messages_sent,
        messages_received,
        source_sends_per_task,
        target_receives_per_task,
        metrics,
        success,
    })
}

/// Independent status oracle: classifies every node from the assignment
/// alone by forward propagation in round order, assuming no malicious worker
/// ever contributes a correct output.
///
/// An honest worker obtains its task's output exactly when a successful
/// honest same-task worker sits in its lookback window, or when the worker of
/// an initial task consults the source, or when every preceding task has a
/// successful honest worker in the corresponding window. On a path graph this
/// coincides with the existence of a directed all-honest path in the worker
/// graph from an initial worker.
pub fn classify_by_reachability(wg: &WorkerGraph, assignment: &Assignment) -> Vec<NodeStatus> {
    let n_tasks = wg.task_count();
    let mut status = vec![NodeStatus::Malicious; wg.node_count()];
    for round in 1..=wg.total_rounds() {
        for task in 0..n_tasks as TaskId {
            if round < wg.t_min(task) || round > wg.t_max(task) {
                continue;
            }
            let node = WorkerNode { task, round };
            let idx = wg.node_index(node);
            if assignment.is_malicious(idx) {
                continue;
            }
            let successful_in = |sender_task: TaskId| -> bool {
                let (lo, hi) = wg.incoming_window(sender_task, round);
                (lo..=hi).any(|r| {
                    let s = wg.node_index(WorkerNode {
                        task: sender_task,
                        round: r,
                    });
                    status[s] == NodeStatus::Successful
                })
            };
            let ok = successful_in(task)
                || wg.is_initial(task)
                || wg.preds(task).iter().all(|&u| successful_in(u));
            status[idx] = if ok {
                NodeStatus::Successful
            } else {
                NodeStatus::Failed
            };
        }
    }
    status
}

/// Whether an assignment makes the computation fail under the dominant
/// (never-correct) adversary: some task ends up with no successful worker.
pub fn assignment_fails(wg: &WorkerGraph, statuses: &[NodeStatus]) -> bool {
    (0..wg.task_count() as TaskId).any(|task| {
        (wg.t_min(task)..=wg.t_max(task)).all(|round| {
            statuses[wg.node_index(WorkerNode { task, round })] != NodeStatus::Successful
        })
    })
}

/// Checks the dominance relation on a pair of traces that share an
/// assignment: if the computation succeeds when no malicious worker is ever
/// correct, it must also succeed when some are. Returns `true` when the
/// relation holds (no violation).
pub fn is_dominated_success(
    never_correct: &ExecutionTrace,
    other: &ExecutionTrace,
) -> Result<bool, SimError> {
    if never_correct.labels != other.labels {
        return Err(SimError::AssignmentMismatch);
    }
    Ok(!(never_correct.success && !other.success))
}

/// Metadata stored in a trace trailer so analyses can be replayed from the
/// file alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceMeta {
    pub beta: f64,
    pub seed: u64,
    pub adversary: String,
}

#[derive(Serialize, Deserialize)]
struct TraceRecord {
    task: String,
    round: u32,
    label: char,
    status: char,
    executed: bool,
    verifications: u32,
}

#[derive(Serialize, Deserialize)]
struct TraceTrailer {
    schema_version: u32,
    delta: u32,
    gamma: u32,
    success: bool,
    meta: TraceMeta,
    metrics: Metrics,
    tasks: Vec<String>,
    edges: Vec<(String, String)>,
}

/// Writes a trace as JSON lines: one record per worker node in canonical
/// order, then one trailer record with the global metrics and enough context
/// to reload the instance.
pub fn write_trace_jsonl<W: Write>(
    mut out: W,
    graph: &LeveledTaskGraph,
    wg: &WorkerGraph,
    trace: &ExecutionTrace,
    meta: &TraceMeta,
) -> Result<(), SimError> {
    for node in wg.nodes() {
        let idx = wg.node_index(node);
        let record = TraceRecord {
            task: graph.name(node.task).to_string(),
            round: node.round,
            label: match trace.labels[idx] {
                Label::Honest => 'H',
                Label::Malicious => 'M',
            },
            status: match trace.status[idx] {
                NodeStatus::Successful => 'S',
                NodeStatus::Failed => 'F',
                NodeStatus::Malicious => 'M',
            },
            executed: trace.executed[idx],
            verifications: trace.verifications[idx],
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    let file = graph.to_file();
    let trailer = TraceTrailer {
        schema_version: 1,
        delta: wg.delta(),
        gamma: wg.gamma(),
        success: trace.success,
        meta: meta.clone(),
        metrics: trace.metrics.clone(),
        tasks: file.tasks,
        edges: file.edges,
    };
    serde_json::to_writer(&mut out, &trailer)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// A trace reloaded from JSON lines, with the instance rebuilt.
#[derive(Debug)]
pub struct LoadedTrace {
    pub graph: LeveledTaskGraph,
    pub worker_graph: WorkerGraph,
    pub assignment: Assignment,
    pub recorded_status: Vec<NodeStatus>,
    pub success: bool,
    pub meta: TraceMeta,
}

/// Reads a trace written by [`write_trace_jsonl`].
pub fn read_trace_jsonl<R: BufRead>(input: R) -> Result<LoadedTrace, SimError> {
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut trailer: Option<TraceTrailer> = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(rec) = serde_json::from_str::<TraceRecord>(&line) {
            records.push(rec);
        } else {
            trailer = Some(serde_json::from_str(&line)?);
        }
    }
    let trailer = trailer.ok_or_else(|| SimError::MalformedTrace("missing trailer".into()))?;
    let graph = TaskGraph::build(&trailer.tasks, &trailer.edges)?.levelize()?;
    let wg = WorkerGraph::build(&graph, ScheduleWindow::new(trailer.delta, trailer.gamma));
    let mut labels = vec![Label::Honest; wg.node_count()];
    let mut recorded_status = vec![NodeStatus::Malicious; wg.node_count()];
    let mut seen = vec![false; wg.node_count()];
    for rec in &records {
        let task = graph
            .id(&rec.task)
            .ok_or_else(|| SimError::MalformedTrace(format!("unknown task {:?}", rec.task)))?;
        let node = WorkerNode {
            task,
            round: rec.round,
        };
        if !wg.contains(node) {
            return Err(SimError::MalformedTrace(format!(
                "node ({}, {}) outside assignment window",
                rec.task, rec.round
            )));
        }
        let idx = wg.node_index(node);
        seen[idx] = true;
        labels[idx] = match rec.label {
            'H' => Label::Honest,
            'M' => Label::Malicious,
            other => return Err(SimError::MalformedTrace(format!("bad label {other:?}"))),
        };
        recorded_status[idx] = match rec.status {
            'S' => NodeStatus::Successful,
            'F' => NodeStatus::Failed,
            'M' => NodeStatus::Malicious,
            other => return Err(SimError::MalformedTrace(format!("bad status {other:?}"))),
        };
    }
    if seen.iter().any(|&s| !s) {
        return Err(SimError::MalformedTrace(
            "trace does not cover every worker node".into(),
        ));
    }
    Ok(LoadedTrace {
        graph,
        worker_graph: wg,
        assignment: Assignment::from_labels(labels),
        recorded_status,
        success: trailer.success,
        meta: trailer.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task_graph::TaskGraph;
    use crate::worker_graph::ScheduleWindow;

    fn diamond() -> LeveledTaskGraph {
        TaskGraph::build(
            &["a", "b", "c", "d"],
            &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")],
        )
        .unwrap()
        .levelize()
        .unwrap()
    }

    fn path(n: usize) -> LeveledTaskGraph {
        let tasks: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        let edges: Vec<(String, String)> = (1..n)
            .map(|i| (format!("v{}", i - 1), format!("v{i}")))
            .collect();
        TaskGraph::build(&tasks, &edges)
            .unwrap()
            .levelize()
            .unwrap()
    }

    fn all_honest(wg: &WorkerGraph) -> Assignment {
        Assignment::from_labels(vec![Label::Honest; wg.node_count()])
    }

    #[test]
    fn beta_zero_everyone_succeeds_with_one_execution_per_task() {
        for window in [ScheduleWindow::new(1, 5), ScheduleWindow::new(3, 7)] {
            let g = diamond();
            let wg = WorkerGraph::build(&g, window);
            let a = Assignment::sample(&wg, 0.0, 7).unwrap();
            assert!(a.labels().iter().all(|&l| l == Label::Honest));
            let trace = simulate(&g, &wg, &a, AdversaryStrategy::NeverCorrect).unwrap();
            assert!(trace.success);
            assert_eq!(trace.metrics.rounds, window.gamma + 2 * window.delta);
            assert!(trace.metrics.executions_per_task.iter().all(|&e| e == 1));
            assert!(trace.status.iter().all(|&s| s == NodeStatus::Successful));
            assert_eq!(trace.metrics.supervisor_assignments, wg.node_count() as u64);
        }
    }

    #[test]
    fn fully_malicious_task_fails_the_computation() {
        let g = path(3);
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(1, 4));
        let mut labels = vec![Label::Honest; wg.node_count()];
        let v1 = g.id("v1").unwrap();
        for round in wg.t_min(v1)..=wg.t_max(v1) {
            labels[wg.node_index(WorkerNode { task: v1, round })] = Label::Malicious;
        }
        let a = Assignment::from_labels(labels);
        let trace = simulate(&g, &wg, &a, AdversaryStrategy::NeverCorrect).unwrap();
        assert!(!trace.success);
    }

    #[test]
    fn all_malicious_means_no_honest_work() {
        let g = diamond();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(2, 3));
        let a = Assignment::from_labels(vec![Label::Malicious; wg.node_count()]);
        let trace = simulate(&g, &wg, &a, AdversaryStrategy::NeverCorrect).unwrap();
        assert!(!trace.success);
        assert_eq!(trace.metrics.total_honest_executions, 0);
        assert!(trace.status.iter().all(|&s| s == NodeStatus::Malicious));
    }

    #[test]
    fn sampling_is_deterministic_and_concentrated() {
        let g = path(100);
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(1, 100));
        assert_eq!(wg.node_count(), 10_000);
        let a1 = Assignment::sample(&wg, 0.5, 99).unwrap();
        let a2 = Assignment::sample(&wg, 0.5, 99).unwrap();
        assert_eq!(a1, a2);
        let frac = a1.malicious_count() as f64 / a1.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "fraction {frac} strays from 0.5");
        assert!(Assignment::sample(&wg, 1.0, 1).is_err());
        assert!(Assignment::sample(&wg, -0.1, 1).is_err());
    }

    #[test]
    fn classifier_matches_hand_cases() {
        let g = path(2);
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(1, 3));
        let (v0, v1) = (g.id("v0").unwrap(), g.id("v1").unwrap());
        // v0: M M H; v1: H M H. The first v1 worker sees only the malicious
        // (v0, 1); the last sees no successful worker anywhere in its windows.
        let mut labels = vec![Label::Honest; wg.node_count()];
        for (task, round) in [(v0, 1), (v0, 2), (v1, 3)] {
            labels[wg.node_index(WorkerNode { task, round })] = Label::Malicious;
        }
        let a = Assignment::from_labels(labels);
        let statuses = classify_by_reachability(&wg, &a);
        let stat = |task, round| statuses[wg.node_index(WorkerNode { task, round })];
        assert_eq!(stat(v0, 3), NodeStatus::Successful, "honest initial worker");
        assert_eq!(
            stat(v1, 2),
            NodeStatus::Failed,
            "window holds only malicious senders"
        );
        assert_eq!(stat(v1, 4), NodeStatus::Successful, "sees (v0, 3)");
        let trace = simulate(&g, &wg, &a, AdversaryStrategy::NeverCorrect).unwrap();
        assert_eq!(trace.status, statuses);
    }

    #[test]
    fn beta_zero_classifies_all_successful() {
        let g = diamond();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(2, 4));
        let statuses = classify_by_reachability(&wg, &all_honest(&wg));
        assert!(statuses.iter().all(|&s| s == NodeStatus::Successful));
    }

    #[test]
    fn domination_check_detects_mismatch_and_passes_vacuously() {
        let g = diamond();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(1, 3));
        let a = Assignment::sample(&wg, 0.9, 3).unwrap();
        let nc = simulate(&g, &wg, &a, AdversaryStrategy::NeverCorrect).unwrap();
        let ac = simulate(&g, &wg, &a, AdversaryStrategy::AlwaysCorrect).unwrap();
        assert!(is_dominated_success(&nc, &ac).unwrap());

        // Without malicious workers the strategy is irrelevant: both runs
        // succeed and the check passes.
        let clean = all_honest(&wg);
        let nc0 = simulate(&g, &wg, &clean, AdversaryStrategy::NeverCorrect).unwrap();
        let ac0 = simulate(&g, &wg, &clean, AdversaryStrategy::AlwaysCorrect).unwrap();
        assert!(nc0.success && ac0.success);
        assert!(is_dominated_success(&nc0, &ac0).unwrap());

        let other = Assignment::sample(&wg, 0.9, 4).unwrap();
        let foreign = simulate(&g, &wg, &other, AdversaryStrategy::AlwaysCorrect).unwrap();
        if other != a {
            assert!(matches!(
                is_dominated_success(&nc, &foreign),
                Err(SimError::AssignmentMismatch)
            ));
        }
    }

    #[test]
    fn simulation_is_deterministic_byte_for_byte() {
        let g = diamond();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(2, 6));
        let a = Assignment::sample(&wg, 0.5, 11).unwrap();
        let strat = AdversaryStrategy::ProbabilisticCorrect { p: 0.3, seed: 5 };
        let t1 = simulate(&g, &wg, &a, strat).unwrap();
        let t2 = simulate(&g, &wg, &a, strat).unwrap();
        assert_eq!(
            serde_json::to_vec(&t1).unwrap(),
            serde_json::to_vec(&t2).unwrap()
        );
    }

    #[test]
    fn trace_round_trips_through_jsonl() {
        let g = diamond();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(1, 4));
        let a = Assignment::sample(&wg, 0.6, 21).unwrap();
        let trace = simulate(&g, &wg, &a, AdversaryStrategy::NeverCorrect).unwrap();
        let meta = TraceMeta {
            beta: 0.6,
            seed: 21,
            adversary: "never".into(),
        };
        let mut buf = Vec::new();
        write_trace_jsonl(&mut buf, &g, &wg, &trace, &meta).unwrap();
        let loaded = read_trace_jsonl(buf.as_slice()).unwrap();
        assert_eq!(loaded.assignment.labels(), trace.labels.as_slice());
        assert_eq!(loaded.recorded_status, trace.status);
        assert_eq!(loaded.success, trace.success);
        assert_eq!(loaded.worker_graph.gamma(), 4);
    }

    #[test]
    fn verification_and_message_bounds_hold() {
        let g = diamond();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(2, 8));
        let a = Assignment::sample(&wg, 0.5, 17).unwrap();
        let trace = simulate(&g, &wg, &a, AdversaryStrategy::NeverCorrect).unwrap();
        for node in wg.nodes() {
            let idx = wg.node_index(node);
            let bound = 2 * wg.delta() * (1 + wg.preds(node.task).len() as u32);
            assert!(trace.verifications[idx] <= bound);
            assert!(trace.messages_received[idx] <= bound);
        }
    }

    /// Every counter of a small hand-traced execution, pinned exactly.
    /// Two tasks, delta 1, gamma 3; v0 workers H M H, v1 workers M H H.
    #[test]
    fn micro_trace_counters_match_hand_computation() {
        let g = path(2);
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(1, 3));
        let (v0, v1) = (g.id("v0").unwrap(), g.id("v1").unwrap());
        let mut labels = vec![Label::Honest; wg.node_count()];
        labels[wg.node_index(WorkerNode { task: v0, round: 2 })] = Label::Malicious;
        labels[wg.node_index(WorkerNode { task: v1, round: 2 })] = Label::Malicious;
        let a = Assignment::from_labels(labels);
        let trace = simulate(&g, &wg, &a, AdversaryStrategy::NeverCorrect).unwrap();

        let idx = |task, round| wg.node_index(WorkerNode { task, round });
        // (v0, 1) computes from the source; (v0, 3) adopts after one garbage
        // and one good verification; (v1, 3) burns one same-task garbage,
        // then one garbage and one good predecessor output, and computes;
        // (v1, 4) adopts from (v1, 3) on its first verification.
        assert!(trace.success);
        assert_eq!(trace.metrics.rounds, 4);
        assert_eq!(trace.metrics.executions_per_task, vec![1, 1]);
        assert_eq!(trace.metrics.total_honest_executions, 2);
        assert_eq!(trace.metrics.total_verifications, 6);
        assert_eq!(trace.metrics.supervisor_assignments, 6);
        assert_eq!(trace.metrics.supervisor_introductions, 9);
        assert_eq!(trace.metrics.source_sends, 2);
        assert_eq!(trace.metrics.target_receives, 3);

        assert_eq!(trace.verifications[idx(v0, 1)], 0);
        assert_eq!(trace.verifications[idx(v0, 3)], 2);
        assert_eq!(trace.verifications[idx(v1, 3)], 3);
        assert_eq!(trace.verifications[idx(v1, 4)], 1);
        assert!(trace.executed[idx(v0, 1)] && trace.executed[idx(v1, 3)]);
        assert!(!trace.executed[idx(v0, 3)] && !trace.executed[idx(v1, 4)]);

        assert_eq!(trace.messages_sent[idx(v0, 1)], 4);
        assert_eq!(trace.messages_sent[idx(v0, 2)], 2);
        assert_eq!(trace.messages_sent[idx(v0, 3)], 0);
        assert_eq!(trace.messages_sent[idx(v1, 2)], 2);
        assert_eq!(trace.messages_sent[idx(v1, 3)], 1);
        assert_eq!(trace.messages_received[idx(v1, 3)], 3);
        assert_eq!(trace.messages_received[idx(v0, 3)], 2);
        assert_eq!(trace.source_sends_per_task, vec![2, 0]);
        assert_eq!(trace.target_receives_per_task, vec![0, 3]);
    }
}
