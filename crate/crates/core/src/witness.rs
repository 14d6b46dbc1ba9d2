//! Witness sequences: certificates extracted from failed executions.
//!
//! A witness sequence is a list of triples `(M_i, M'_i, w_i)` walking the
//! worker graph. Each `M` is a contiguous run of same-task workers, each
//! `w_i` a single worker, and the final triple is `(M_{l+1}, {}, bottom)`.
//! The walk starts at the first assignment slot of some task, moves to a
//! successor task after each successful pivot and back to a predecessor task
//! after each failed pivot, and ends when it reaches the last slot of some
//! task. A sequence is *valid* for an assignment when every `M`/`M'` worker
//! is malicious, every downward pivot is an honest successful worker, and
//! every upward pivot an honest failed one. A failed execution always admits
//! a valid witness sequence, and a valid witness pins at least
//! `max((delta-1)*l, gamma)` malicious sampling outcomes, which is what makes
//! failure improbable.
//!
//! This module provides the structural checker, the validity checker, the
//! constructive procedures for path graphs and DAGs, exhaustive enumeration
//! for tiny instances, the malicious-count bound, and the analytic
//! failure-probability bound.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Assignment, NodeStatus};
use crate::task_graph::{LeveledTaskGraph, TaskId};
use crate::worker_graph::{WorkerGraph, WorkerNode};

#[derive(Debug, Error)]
pub enum WitnessError {
    #[error("witness references node (task {task}, round {round}) outside the worker graph")]
    UnknownNode { task: TaskId, round: u32 },
    #[error("the computation succeeded; nothing to witness")]
    ComputationSucceeded,
    #[error("instance has {0} worker nodes; exhaustive enumeration is capped at {1}")]
    InstanceTooLarge(usize, usize),
    #[error("graph is not a directed path")]
    NotAPath,
    #[error("witness file is malformed: {0}")]
    Malformed(String),
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
    #[error("construction invariant violated: {0}")]
    InternalInvariant(String),
}

/// Contiguous run of workers of one task, rounds `start..=end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub task: TaskId,
    pub start: u32,
    pub end: u32,
}

impl Run {
    pub fn new(task: TaskId, start: u32, end: u32) -> Self {
        debug_assert!(start <= end);
        Run { task, start, end }
    }

    /// `None` when `start > end`, so empty runs collapse away.
    pub fn maybe(task: TaskId, start: u32, end: u32) -> Option<Self> {
        (start <= end).then_some(Run { task, start, end })
    }

    /// Number of workers in the run; runs are never empty.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn nodes(&self) -> impl Iterator<Item = WorkerNode> + '_ {
        (self.start..=self.end).map(|round| WorkerNode {
            task: self.task,
            round,
        })
    }
}

/// One element `(M, M', w)` of a witness sequence. `pivot == None` marks the
/// terminator of the final triple. When both `m` and `pivot` are present, the
/// pivot immediately follows the run at the same task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessTriple {
    pub m: Option<Run>,
    pub m_prime: Option<Run>,
    pub pivot: Option<WorkerNode>,
}

/// An ordered witness sequence ending in a terminator triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessSequence {
    pub triples: Vec<WitnessTriple>,
}

impl WitnessSequence {
    /// Number of pivots, `l`; the sequence has `l + 1` triples.
    pub fn pivot_count(&self) -> usize {
        self.triples.iter().filter(|t| t.pivot.is_some()).count()
    }

    pub fn pivots(&self) -> impl Iterator<Item = WorkerNode> + '_ {
        self.triples.iter().filter_map(|t| t.pivot)
    }

    pub fn m_runs(&self) -> impl Iterator<Item = Run> + '_ {
        self.triples.iter().filter_map(|t| t.m)
    }

    pub fn m_prime_runs(&self) -> impl Iterator<Item = Run> + '_ {
        self.triples.iter().filter_map(|t| t.m_prime)
    }

    /// All workers claimed malicious, i.e. the union of the `M` and `M'` runs.
    pub fn malicious_nodes(&self) -> impl Iterator<Item = WorkerNode> + '_ {
        self.m_runs().chain(self.m_prime_runs()).flat_map(|r| {
            (r.start..=r.end).map(move |round| WorkerNode {
                task: r.task,
                round,
            })
        })
    }

    /// `m = |M union M'|`; the runs of a structurally checked sequence are
    /// pairwise disjoint, so the lengths just add up.
    pub fn malicious_count(&self) -> usize {
        self.m_runs()
            .chain(self.m_prime_runs())
            .map(|r| r.len())
            .sum()
    }

    /// Indices (into `triples`) of the pivots whose sequence continues at a
    /// predecessor task; these are the pivots that must have failed. A
    /// structurally checked sequence carries an `M'` run exactly on its
    /// upward transitions, so its presence marks the direction.
    pub fn upward_pivot_indices(&self) -> Vec<usize> {
        self.triples
            .iter()
            .enumerate()
            .filter(|(_, t)| t.pivot.is_some() && t.m_prime.is_some())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Numbered clause of the witness-sequence definition that a structural
/// check can report as violated. `Preamble` covers the shape requirements
/// that precede the numbered properties (contiguity, triple layout).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolatedClause {
    Preamble,
    Start,
    Transition,
    Disjointness,
    Termination,
}

impl ViolatedClause {
    pub fn number(self) -> u8 {
        match self {
            ViolatedClause::Preamble => 0,
            ViolatedClause::Start => 1,
            ViolatedClause::Transition => 2,
            ViolatedClause::Disjointness => 3,
            ViolatedClause::Termination => 4,
        }
    }
}

/// First violated clause, with context.
#[derive(Debug, Clone)]
pub struct Violation {
    pub clause: ViolatedClause,
    pub detail: String,
}

fn violation(clause: ViolatedClause, detail: impl Into<String>) -> Option<Violation> {
    Some(Violation {
        clause,
        detail: detail.into(),
    })
}

/// Structural check: is `ws` a witness sequence of `wg`? Returns the first
/// violated clause if not. Referencing a node that does not exist in the
/// worker graph is an error, not a violation.
pub fn is_witness_sequence(
    ws: &WitnessSequence,
    wg: &WorkerGraph,
) -> Result<Option<Violation>, WitnessError> {
    // Node existence and run shape.
    for triple in &ws.triples {
        for run in [triple.m, triple.m_prime].into_iter().flatten() {
            if run.start > run.end {
                return Ok(violation(ViolatedClause::Preamble, "run with start > end"));
            }
            for node in [
                WorkerNode {
                    task: run.task,
                    round: run.start,
                },
                WorkerNode {
                    task: run.task,
                    round: run.end,
                },
            ] {
                if !wg.contains(node) {
                    return Err(WitnessError::UnknownNode {
                        task: node.task,
                        round: node.round,
                    });
                }
            }
        }
        if let Some(p) = triple.pivot {
            if !wg.contains(p) {
                return Err(WitnessError::UnknownNode {
                    task: p.task,
                    round: p.round,
                });
            }
        }
    }

    // Triple layout: exactly one terminator, at the end, with empty m_prime;
    // pivots adjacent to their runs.
    let Some((last, body)) = ws.triples.split_last() else {
        return Ok(violation(
            ViolatedClause::Preamble,
            "sequence has no triples",
        ));
    };
    if last.pivot.is_some() {
        return Ok(violation(
            ViolatedClause::Preamble,
            "final triple must end in the terminator",
        ));
    }
    if last.m_prime.is_some() {
        return Ok(violation(
            ViolatedClause::Preamble,
            "final triple must have empty M'",
        ));
    }
    for (i, triple) in body.iter().enumerate() {
        let Some(pivot) = triple.pivot else {
            return Ok(violation(
                ViolatedClause::Preamble,
                format!("triple {i} lacks a pivot but is not final"),
            ));
        };
        if let Some(m) = triple.m {
            if m.task != pivot.task || pivot.round != m.end + 1 {
                return Ok(violation(
                    ViolatedClause::Preamble,
                    format!("triple {i}: pivot must immediately follow its run"),
                ));
            }
        }
    }

    // Clause 1: the sequence starts at the first assignment slot of a task.
    let first = &ws.triples[0];
    let starts_at_t_min = match (first.m, first.pivot) {
        (Some(run), _) => run.start == wg.t_min(run.task),
        (None, Some(pivot)) => pivot.round == wg.t_min(pivot.task),
        (None, None) => false,
    };
    if !starts_at_t_min {
        return Ok(violation(
            ViolatedClause::Start,
            "M1 u {w1} does not contain (v, t_min(v))",
        ));
    }

    // Clause 2: each consecutive pair matches exactly one transition case.
    let delta = wg.delta();
    for (i, triple) in body.iter().enumerate() {
        let pivot = triple.pivot.expect("body triples have pivots");
        let (v, t) = (pivot.task, pivot.round);
        let next = &ws.triples[i + 1];
        let m_prime = triple.m_prime;
        let fail = |d: String| violation(ViolatedClause::Transition, format!("triple {i}: {d}"));

        let check_m_prime_for_up = |v_up: TaskId| -> Option<String> {
            let Some(mp) = m_prime else {
                return Some("upward move without M'".into());
            };
            if mp.task != v_up {
                return Some("M' must live at the task the sequence moves to".into());
            }
            if mp.start + 2 * delta > t {
                return Some(format!("M' starts at {} > t - 2*delta", mp.start));
            }
            let want_end = (mp.start + 2 * delta - 1).min(wg.t_max(v_up));
            if mp.end != want_end {
                return Some(format!(
                    "M' must span min(t''+2delta-1, t_max), got end {}",
                    mp.end
                ));
            }
            if t < wg.t_min(v) + delta {
                return Some("upward move requires t >= t_min(v) + delta".into());
            }
            None
        };

        match next.pivot {
            Some(wn) => {
                let (v2, t2) = (wn.task, wn.round);
                if wg.sucs(v).contains(&v2) {
                    // Downwards.
                    if t2 <= t {
                        return Ok(fail("downward pivot must be assigned later".into()));
                    }
                    if next.m != Run::maybe(v2, t + 1, t2 - 1) {
                        return Ok(fail("downward M must cover (v', t+1 .. t'-1)".into()));
                    }
                    if m_prime.is_some() {
                        return Ok(fail("downward move requires empty M'".into()));
                    }
                } else if wg.preds(v).contains(&v2) {
                    // Upwards.
                    if t2 < t {
                        return Ok(fail("upward pivot must not be assigned earlier".into()));
                    }
                    if next.m != Run::maybe(v2, t, t2 - 1) {
                        return Ok(fail("upward M must cover (v', t .. t'-1)".into()));
                    }
                    if let Some(d) = check_m_prime_for_up(v2) {
                        return Ok(fail(d));
                    }
                } else {
                    return Ok(fail(
                        "next pivot is neither at a successor nor a predecessor".into(),
                    ));
                }
            }
            None => {
                // Terminal transition: downward stop or upward stop.
                match next.m {
                    Some(run) if wg.sucs(v).contains(&run.task) => {
                        if run.start != t + 1 || run.end != wg.t_max(run.task) {
                            return Ok(fail("downward stop must cover (v', t+1 .. t_max)".into()));
                        }
                        if m_prime.is_some() {
                            return Ok(fail("downward stop requires empty M'".into()));
                        }
                    }
                    Some(run) if wg.preds(v).contains(&run.task) => {
                        if run.start != t || run.end != wg.t_max(run.task) {
                            return Ok(fail("upward stop must cover (v', t .. t_max)".into()));
                        }
                        if let Some(d) = check_m_prime_for_up(run.task) {
                            return Ok(fail(d));
                        }
                    }
                    Some(_) => {
                        return Ok(fail(
                            "terminal run is neither at a successor nor a predecessor".into(),
                        ));
                    }
                    None => {
                        // Empty-terminal stop: only reachable upwards, past
                        // the end of a predecessor's window.
                        let Some(mp) = m_prime else {
                            return Ok(fail(
                                "empty terminal requires an upward move with M'".into(),
                            ));
                        };
                        if !wg.preds(v).contains(&mp.task) {
                            return Ok(fail("empty terminal M' must live at a predecessor".into()));
                        }
                        if t <= wg.t_max(mp.task) {
                            return Ok(fail(
                                "empty terminal only when t exceeds the predecessor window".into(),
                            ));
                        }
                        if let Some(d) = check_m_prime_for_up(mp.task) {
                            return Ok(fail(d));
                        }
                    }
                }
            }
        }
    }

    // Clause 3: all runs pairwise disjoint.
    let mut seen = std::collections::HashSet::new();
    for node in ws.malicious_nodes() {
        if !seen.insert(node) {
            return Ok(violation(
                ViolatedClause::Disjointness,
                format!(
                    "worker (task {}, round {}) appears in two runs",
                    node.task, node.round
                ),
            ));
        }
    }

    // Clause 4: the sequence reaches the last slot of some task, or the last
    // pivot sits within delta of it and the final run is empty.
    let terminal_ok = match last.m {
        Some(run) => run.end == wg.t_max(run.task),
        None => body
            .last()
            .and_then(|t| t.pivot)
            .is_some_and(|w| w.round + delta > wg.t_max(w.task)),
    };
    if !terminal_ok {
        return Ok(violation(
            ViolatedClause::Termination,
            "sequence does not reach t_max",
        ));
    }

    Ok(None)
}

/// Validity of a structurally sound witness sequence with respect to an
/// assignment: all run workers malicious, all upward pivots honest failed,
/// all downward pivots honest successful. Statuses come from
/// [`crate::protocol::classify_by_reachability`].
pub fn is_valid_wrt(
    ws: &WitnessSequence,
    wg: &WorkerGraph,
    assignment: &Assignment,
    statuses: &[NodeStatus],
) -> bool {
    for node in ws.malicious_nodes() {
        if !assignment.is_malicious(wg.node_index(node)) {
            return false;
        }
    }
    let upward: std::collections::HashSet<usize> = ws.upward_pivot_indices().into_iter().collect();
    for (i, triple) in ws.triples.iter().enumerate() {
        let Some(pivot) = triple.pivot else { continue };
        let idx = wg.node_index(pivot);
        if assignment.is_malicious(idx) {
            return false;
        }
        let want = if upward.contains(&i) {
            NodeStatus::Failed
        } else {
            NodeStatus::Successful
        };
        if statuses[idx] != want {
            return false;
        }
    }
    true
}

/// `m >= max((delta - 1) * l, gamma)`: every valid witness sequence pins at
/// least this many malicious workers.
pub fn check_bound(ws: &WitnessSequence, wg: &WorkerGraph) -> bool {
    let m = ws.malicious_count();
    let l = ws.pivot_count();
    let bound = ((wg.delta() as usize - 1) * l).max(wg.gamma() as usize);
    m >= bound
}

// ---------------------------------------------------------------------------
// Construction.
// ---------------------------------------------------------------------------

/// Which traversal produces the witness: the path construction starts at the
/// last task whose first honest worker succeeded and needs no bookkeeping;
/// the DAG construction searches upward from the shallowest failed task and
/// tracks its descent with a stack.
enum Traversal {
    Path,
    Dag { stack: Vec<TaskId> },
}

struct Builder<'a> {
    wg: &'a WorkerGraph,
    statuses: &'a [NodeStatus],
    /// Ascending rounds of successful workers, per task.
    successful_rounds: Vec<Vec<u32>>,
    /// Round of the first honest worker, per task, if any.
    first_honest: Vec<Option<u32>>,
    triples: Vec<WitnessTriple>,
    /// Failed pivots added so far with the predecessor task each moved to;
    /// feeds the success-barrier self-check.
    links: Vec<(WorkerNode, TaskId)>,
}

impl<'a> Builder<'a> {
    fn new(wg: &'a WorkerGraph, statuses: &'a [NodeStatus]) -> Self {
        let n = wg.task_count();
        let mut successful_rounds = vec![Vec::new(); n];
        let mut first_honest = vec![None; n];
        for task in 0..n as TaskId {
            for round in wg.t_min(task)..=wg.t_max(task) {
                match statuses[wg.node_index(WorkerNode { task, round })] {
                    NodeStatus::Malicious => {}
                    NodeStatus::Successful => {
                        successful_rounds[task as usize].push(round);
                        first_honest[task as usize].get_or_insert(round);
                    }
                    NodeStatus::Failed => {
                        first_honest[task as usize].get_or_insert(round);
                    }
                }
            }
        }
        Builder {
            wg,
            statuses,
            successful_rounds,
            first_honest,
            triples: Vec::new(),
            links: Vec::new(),
        }
    }

    fn status(&self, node: WorkerNode) -> NodeStatus {
        self.statuses[self.wg.node_index(node)]
    }

    fn is_honest(&self, node: WorkerNode) -> bool {
        self.status(node) != NodeStatus::Malicious
    }

    fn first_successful(&self, task: TaskId) -> Option<u32> {
        self.successful_rounds[task as usize].first().copied()
    }

    fn last_successful_before(&self, task: TaskId, round: u32) -> Option<u32> {
        let rounds = &self.successful_rounds[task as usize];
        let i = rounds.partition_point(|&r| r < round);
        (i > 0).then(|| rounds[i - 1])
    }

    fn first_honest_at_or_after(&self, task: TaskId, round: u32) -> Option<u32> {
        (round.max(self.wg.t_min(task))..=self.wg.t_max(task))
            .find(|&r| self.is_honest(WorkerNode { task, round: r }))
    }

    /// Does any successful worker of `sender_task` fall into the lookback
    /// window of a worker of round `round`?
    fn delivers_to(&self, sender_task: TaskId, round: u32) -> bool {
        let (lo, hi) = self.wg.incoming_window(sender_task, round);
        lo <= hi
            && self
                .last_successful_before(sender_task, hi + 1)
                .is_some_and(|r| r >= lo)
    }

    /// The predecessor task (smallest id) from which the failed worker
    /// received no correct output.
    fn non_delivering_pred(&self, pivot: WorkerNode) -> Result<TaskId, WitnessError> {
        self.wg
            .preds(pivot.task)
            .iter()
            .copied()
            .find(|&u| !self.delivers_to(u, pivot.round))
            .ok_or_else(|| {
                WitnessError::InternalInvariant(format!(
                    "failed pivot (task {}, round {}) has no undelivered predecessor",
                    pivot.task, pivot.round
                ))
            })
    }

    /// The `M'` run for a failed pivot: the `2*delta` slots right after the
    /// last successful worker of the chosen predecessor, clipped at `t_max`.
    fn m_prime_for(&self, pivot: WorkerNode, pred: TaskId) -> Result<Run, WitnessError> {
        let delta = self.wg.delta();
        let last = self
            .last_successful_before(pred, pivot.round)
            .ok_or_else(|| {
                WitnessError::InternalInvariant(format!(
                    "no successful worker of task {pred} precedes round {}",
                    pivot.round
                ))
            })?;
        let start = last + 1;
        if start + 2 * delta > pivot.round {
            return Err(WitnessError::InternalInvariant(format!(
                "last successful worker of task {pred} sits inside the window of the failed pivot"
            )));
        }
        Ok(Run::new(
            pred,
            start,
            (start + 2 * delta - 1).min(self.wg.t_max(pred)),
        ))
    }

    /// Success-barrier self-check, run when a pivot is added: every ancestor
    /// of the pivot's task must carry a successful worker before the pivot's
    /// round whose `2*delta` successor slots were not already claimed by an
    /// earlier failed pivot that moved up to that ancestor.
    fn assert_success_barrier(&self, pivot: WorkerNode) -> Result<(), WitnessError> {
        let mut stack: Vec<TaskId> = self.wg.preds(pivot.task).to_vec();
        let mut seen = vec![false; self.wg.task_count()];
        while let Some(a) = stack.pop() {
            if std::mem::replace(&mut seen[a as usize], true) {
                continue;
            }
            let last = self.last_successful_before(a, pivot.round).ok_or_else(|| {
                WitnessError::InternalInvariant(format!(
                    "ancestor task {a} has no successful worker before round {}",
                    pivot.round
                ))
            })?;
            let linked = self.links.iter().any(|&(w, up_to)| {
                up_to == a
                    && self.wg.sucs(a).contains(&w.task)
                    && last < w.round
                    && w.round < pivot.round
            });
            if linked {
                return Err(WitnessError::InternalInvariant(format!(
                    "last successful worker of ancestor {a} is already linked at round {}",
                    pivot.round
                )));
            }
            stack.extend_from_slice(self.wg.preds(a));
        }
        Ok(())
    }

    /// Appends the triple for a fresh pivot; picks and records its upward
    /// target when the pivot failed.
    fn push_pivot(&mut self, m: Option<Run>, pivot: WorkerNode) -> Result<(), WitnessError> {
        self.assert_success_barrier(pivot)?;
        let m_prime = if self.status(pivot) == NodeStatus::Failed {
            let pred = self.non_delivering_pred(pivot)?;
            self.links.push((pivot, pred));
            Some(self.m_prime_for(pivot, pred)?)
        } else {
            None
        };
        self.triples.push(WitnessTriple {
            m,
            m_prime,
            pivot: Some(pivot),
        });
        Ok(())
    }

    fn current_pivot(&self) -> WorkerNode {
        self.triples
            .last()
            .and_then(|t| t.pivot)
            .expect("builder holds a pivot")
    }

    /// Starts (or restarts) the sequence at `task`, pivoting on its first
    /// honest worker.
    fn start_at(&mut self, task: TaskId) -> Result<(), WitnessError> {
        self.triples.clear();
        self.links.clear();
        let t = self.first_honest[task as usize].ok_or_else(|| {
            WitnessError::InternalInvariant(format!("task {task} has no honest worker"))
        })?;
        let m = Run::maybe(task, self.wg.t_min(task), t - 1);
        self.push_pivot(m, WorkerNode { task, round: t })
    }

    fn finish(mut self, m: Option<Run>) -> WitnessSequence {
        self.triples.push(WitnessTriple {
            m,
            m_prime: None,
            pivot: None,
        });
        WitnessSequence {
            triples: self.triples,
        }
    }
}

fn construct_witness(
    wg: &WorkerGraph,
    statuses: &[NodeStatus],
    mut traversal: Traversal,
    start: TaskId,
) -> Result<WitnessSequence, WitnessError> {
    let mut b = Builder::new(wg, statuses);
    b.start_at(start)?;
    loop {
        let pivot = b.current_pivot();
        let (v, t) = (pivot.task, pivot.round);
        if b.status(pivot) == NodeStatus::Successful {
            let v2 = match &mut traversal {
                Traversal::Path => *wg.sucs(v).first().ok_or_else(|| {
                    WitnessError::InternalInvariant(format!(
                        "successful pivot at final task {v} of a failed path run"
                    ))
                })?,
                Traversal::Dag { stack } => {
                    let v2 = stack.pop().ok_or_else(|| {
                        WitnessError::InternalInvariant("descent stack exhausted".into())
                    })?;
                    if !wg.sucs(v).contains(&v2) {
                        return Err(WitnessError::InternalInvariant(format!(
                            "stack top {v2} is not a successor of {v}"
                        )));
                    }
                    v2
                }
            };
            if t + 1 < wg.t_min(v2) {
                // The successor's window has not opened yet: drop everything
                // collected so far and restart from the successor.
                b.start_at(v2)?;
                continue;
            }
            match b.first_honest_at_or_after(v2, t + 1) {
                None => return Ok(b.finish(Some(Run::new(v2, t + 1, wg.t_max(v2))))),
                Some(t2) => b.push_pivot(
                    Run::maybe(v2, t + 1, t2 - 1),
                    WorkerNode {
                        task: v2,
                        round: t2,
                    },
                )?,
            }
        } else {
            // Failed pivot: move up to the predecessor recorded for it.
            let v2 = b
                .links
                .iter()
                .rev()
                .find(|&&(w, _)| w == pivot)
                .map(|&(_, pred)| pred)
                .ok_or_else(|| {
                    WitnessError::InternalInvariant("failed pivot without link".into())
                })?;
            if let Traversal::Dag { stack } = &mut traversal {
                stack.push(v);
            }
            if t > wg.t_max(v2) {
                return Ok(b.finish(None));
            }
            match b.first_honest_at_or_after(v2, t) {
                None => return Ok(b.finish(Some(Run::new(v2, t, wg.t_max(v2))))),
                Some(t2) => b.push_pivot(
                    Run::maybe(v2, t, t2 - 1),
                    WorkerNode {
                        task: v2,
                        round: t2,
                    },
                )?,
            }
        }
    }
}

/// The single-triple witness covering an entirely malicious task, if any.
fn all_malicious_witness(wg: &WorkerGraph, statuses: &[NodeStatus]) -> Option<WitnessSequence> {
    (0..wg.task_count() as TaskId)
        .find(|&task| {
            (wg.t_min(task)..=wg.t_max(task)).all(|round| {
                statuses[wg.node_index(WorkerNode { task, round })] == NodeStatus::Malicious
            })
        })
        .map(|task| WitnessSequence {
            triples: vec![WitnessTriple {
                m: Some(Run::new(task, wg.t_min(task), wg.t_max(task))),
                m_prime: None,
                pivot: None,
            }],
        })
}

fn ensure_failed(wg: &WorkerGraph, statuses: &[NodeStatus]) -> Result<(), WitnessError> {
    if crate::protocol::assignment_fails(wg, statuses) {
        Ok(())
    } else {
        Err(WitnessError::ComputationSucceeded)
    }
}

/// Constructs a valid witness sequence for a failed execution on a path
/// graph. Starts at the last task whose first honest worker succeeded.
pub fn construct_witness_path(
    graph: &LeveledTaskGraph,
    wg: &WorkerGraph,
    statuses: &[NodeStatus],
) -> Result<WitnessSequence, WitnessError> {
    let is_path = graph
        .tasks()
        .all(|v| graph.preds(v).len() <= 1 && graph.sucs(v).len() <= 1)
        && graph.initial_tasks().len() == 1;
    if !is_path {
        return Err(WitnessError::NotAPath);
    }
    ensure_failed(wg, statuses)?;
    if let Some(ws) = all_malicious_witness(wg, statuses) {
        return Ok(ws);
    }
    let b = Builder::new(wg, statuses);
    let start = graph
        .tasks()
        .filter(|&v| {
            b.first_honest[v as usize].is_some_and(|t| {
                b.status(WorkerNode { task: v, round: t }) == NodeStatus::Successful
            })
        })
        .max_by_key(|&v| graph.depth(v))
        .ok_or_else(|| WitnessError::InternalInvariant("no task starts successfully".into()))?;
    construct_witness(wg, statuses, Traversal::Path, start)
}

/// Constructs a valid witness sequence for a failed execution on any leveled
/// DAG. Walks up from the shallowest task without a successful worker,
/// always towards the predecessor whose first successful worker came last,
/// and keeps the descent on a stack. Ties break towards the smallest task
/// id, so the construction is deterministic.
pub fn construct_witness_dag(
    wg: &WorkerGraph,
    statuses: &[NodeStatus],
) -> Result<WitnessSequence, WitnessError> {
    ensure_failed(wg, statuses)?;
    if let Some(ws) = all_malicious_witness(wg, statuses) {
        return Ok(ws);
    }
    let b = Builder::new(wg, statuses);
    let mut depth = vec![0u32; wg.task_count()];
    for task in 0..wg.task_count() as TaskId {
        depth[task as usize] = (wg.t_min(task) - 1) / wg.delta() + 1;
    }
    let v_fail = (0..wg.task_count() as TaskId)
        .filter(|&v| b.first_successful(v).is_none())
        .min_by_key(|&v| (depth[v as usize], v))
        .ok_or(WitnessError::ComputationSucceeded)?;

    let mut stack = Vec::new();
    let mut v = v_fail;
    loop {
        let fh = b.first_honest[v as usize].ok_or_else(|| {
            WitnessError::InternalInvariant(format!("task {v} has no honest worker"))
        })?;
        if b.status(WorkerNode { task: v, round: fh }) == NodeStatus::Successful {
            break;
        }
        let v2 = b
            .wg
            .preds(v)
            .iter()
            .copied()
            .map(|u| {
                let t = b.first_successful(u).ok_or_else(|| {
                    WitnessError::InternalInvariant(format!(
                        "predecessor {u} has no successful worker during start search"
                    ))
                })?;
                Ok((t, u))
            })
            .collect::<Result<Vec<_>, WitnessError>>()?
            .into_iter()
            .max_by_key(|&(t, u)| (t, std::cmp::Reverse(u)))
            .ok_or_else(|| WitnessError::InternalInvariant(format!("task {v} has no predecessor")))?
            .1;
        stack.push(v);
        v = v2;
    }
    construct_witness(wg, statuses, Traversal::Dag { stack }, v)
}

// ---------------------------------------------------------------------------
// Enumeration and counting.
// ---------------------------------------------------------------------------

/// Upper bounds on the component sizes of enumerated sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeCaps {
    pub max_malicious: usize,
    pub max_pivots: usize,
    pub max_failed: usize,
}

impl SizeCaps {
    /// Caps loose enough to admit every sequence of the instance.
    pub fn unbounded(wg: &WorkerGraph) -> Self {
        let n = wg.node_count();
        SizeCaps {
            max_malicious: n,
            max_pivots: n,
            max_failed: n,
        }
    }
}

/// Hard ceiling on instance size for exhaustive enumeration.
pub const ENUMERATION_NODE_CAP: usize = 40;

/// Visits every witness sequence of `wg` whose component sizes respect
/// `caps`, in a deterministic depth-first order. Only tiny instances are
/// admitted.
pub fn for_each_witness_sequence<F: FnMut(&WitnessSequence)>(
    wg: &WorkerGraph,
    caps: SizeCaps,
    mut visit: F,
) -> Result<(), WitnessError> {
    if wg.node_count() > ENUMERATION_NODE_CAP {
        return Err(WitnessError::InstanceTooLarge(
            wg.node_count(),
            ENUMERATION_NODE_CAP,
        ));
    }
    let mut walk = Walk {
        wg,
        caps,
        used: vec![false; wg.node_count()],
        triples: Vec::new(),
        visit: &mut visit,
    };
    for task in 0..wg.task_count() as TaskId {
        let t_min = wg.t_min(task);
        let t_max = wg.t_max(task);
        // M1 is a (possibly empty) prefix of the task's slots.
        for end in (t_min - 1)..=t_max {
            let m1 = Run::maybe(task, t_min, end);
            let m_size = m1.map_or(0, |r| r.len());
            if m_size > caps.max_malicious {
                break;
            }
            if end == t_max {
                // The whole task: a complete witness sequence on its own.
                walk.emit_terminal(m1, m_size, 0, 0);
                continue;
            }
            if caps.max_pivots < 1 {
                continue;
            }
            let pivot = WorkerNode {
                task,
                round: end + 1,
            };
            walk.mark(m1, true);
            walk.triples.push(WitnessTriple {
                m: m1,
                m_prime: None,
                pivot: Some(pivot),
            });
            walk.extend(pivot, m_size, 1, 0);
            walk.triples.pop();
            walk.mark(m1, false);
        }
    }
    Ok(())
}

/// Exhaustively counts the witness sequences of `wg`, grouped by
/// `(|M u M'|, |H|, |F|)`. Only tiny instances are admitted.
pub fn enumerate_witness_sequences(
    wg: &WorkerGraph,
    caps: SizeCaps,
) -> Result<BTreeMap<(usize, usize, usize), u64>, WitnessError> {
    let mut counts = BTreeMap::new();
    for_each_witness_sequence(wg, caps, |ws| {
        let m = ws.malicious_count();
        let h = ws.pivot_count();
        let f = ws.upward_pivot_indices().len();
        *counts.entry((m, h, f)).or_insert(0) += 1;
    })?;
    Ok(counts)
}

/// Depth-first enumeration state: the triples built so far, with a usage
/// bitmap enforcing disjointness.
struct Walk<'a, F: FnMut(&WitnessSequence)> {
    wg: &'a WorkerGraph,
    caps: SizeCaps,
    used: Vec<bool>,
    triples: Vec<WitnessTriple>,
    visit: &'a mut F,
}

impl<F: FnMut(&WitnessSequence)> Walk<'_, F> {
    fn mark(&mut self, run: Option<Run>, value: bool) {
        if let Some(run) = run {
            for node in run.nodes() {
                self.used[self.wg.node_index(node)] = value;
            }
        }
    }

    fn run_free(&self, run: Option<Run>) -> bool {
        run.is_none_or(|r| r.nodes().all(|n| !self.used[self.wg.node_index(n)]))
    }

    /// Appends the final triple and reports the completed sequence.
    fn emit_terminal(&mut self, m: Option<Run>, m_total: usize, h: usize, f: usize) {
        if m_total <= self.caps.max_malicious
            && h <= self.caps.max_pivots
            && f <= self.caps.max_failed
        {
            self.triples.push(WitnessTriple {
                m,
                m_prime: None,
                pivot: None,
            });
            let ws = WitnessSequence {
                triples: self.triples.clone(),
            };
            (self.visit)(&ws);
            self.triples.pop();
        }
    }

    /// Extends the sequence from its latest pivot `(v, t)`; `m`, `h`, `f`
    /// are the component sizes so far.
    fn extend(&mut self, pivot: WorkerNode, m: usize, h: usize, f: usize) {
        let wg = self.wg;
        let (v, t) = (pivot.task, pivot.round);
        let delta = wg.delta();

        // Downward moves: the pivot was successful.
        for &v2 in wg.sucs(v) {
            if t + 1 < wg.t_min(v2) {
                continue;
            }
            // Downward stop.
            let stop = Run::new(v2, t + 1, wg.t_max(v2));
            if m + stop.len() <= self.caps.max_malicious && self.run_free(Some(stop)) {
                self.emit_terminal(Some(stop), m + stop.len(), h, f);
            }
            // Downward step to the next pivot.
            for t2 in (t + 1)..=wg.t_max(v2) {
                let run = Run::maybe(v2, t + 1, t2 - 1);
                let grown = m + run.map_or(0, |r| r.len());
                if grown > self.caps.max_malicious || h + 1 > self.caps.max_pivots {
                    break;
                }
                if !self.run_free(run) {
                    break;
                }
                let next = WorkerNode {
                    task: v2,
                    round: t2,
                };
                self.mark(run, true);
                self.triples.push(WitnessTriple {
                    m: run,
                    m_prime: None,
                    pivot: Some(next),
                });
                self.extend(next, grown, h + 1, f);
                self.triples.pop();
                self.mark(run, false);
            }
        }

        // Upward moves: the pivot failed; they exist only past the first
        // delta slots and consume an M' run at the target task.
        if t < wg.t_min(v) + delta || f + 1 > self.caps.max_failed {
            return;
        }
        for &v2 in wg.preds(v) {
            if t < 2 * delta || wg.t_min(v2) + 2 * delta > t {
                // No admissible M' start t'' <= t - 2*delta exists.
                continue;
            }
            for t_pp in wg.t_min(v2)..=(t - 2 * delta) {
                let m_prime = Run::new(v2, t_pp, (t_pp + 2 * delta - 1).min(wg.t_max(v2)));
                if m + m_prime.len() > self.caps.max_malicious || !self.run_free(Some(m_prime)) {
                    continue;
                }
                self.mark(Some(m_prime), true);
                let slot = self.triples.len() - 1;
                self.triples[slot].m_prime = Some(m_prime);
                let base = m + m_prime.len();
                if t > wg.t_max(v2) {
                    // Empty-terminal upward stop.
                    self.emit_terminal(None, base, h, f + 1);
                } else {
                    // Upward stop covering the rest of the predecessor's
                    // window.
                    let stop = Run::new(v2, t, wg.t_max(v2));
                    if base + stop.len() <= self.caps.max_malicious && self.run_free(Some(stop)) {
                        self.emit_terminal(Some(stop), base + stop.len(), h, f + 1);
                    }
                    // Upward step to the next pivot.
                    for t2 in t..=wg.t_max(v2) {
                        let run = Run::maybe(v2, t, t2 - 1);
                        let grown = base + run.map_or(0, |r| r.len());
                        if grown > self.caps.max_malicious || h + 1 > self.caps.max_pivots {
                            break;
                        }
                        if !self.run_free(run) {
                            break;
                        }
                        let next = WorkerNode {
                            task: v2,
                            round: t2,
                        };
                        self.mark(run, true);
                        self.triples.push(WitnessTriple {
                            m: run,
                            m_prime: None,
                            pivot: Some(next),
                        });
                        self.extend(next, grown, h + 1, f + 1);
                        self.triples.pop();
                        self.mark(run, false);
                    }
                }
                self.triples[slot].m_prime = None;
                self.mark(Some(m_prime), false);
            }
        }
    }
}

/// The counting bound `n * C(m + h, h) * (2 * gamma * d)^h` on the number of
/// witness sequences with component sizes `(m, h, .)`; `d` is clamped to at
/// least 1. Saturates at `u128::MAX`.
pub fn witness_count_bound(n: usize, d: usize, gamma: u32, m: usize, h: usize) -> u128 {
    let d = d.max(1);
    let choose = binomial(m + h, h);
    let base = 2u128
        .saturating_mul(gamma as u128)
        .saturating_mul(d as u128);
    let mut pow = 1u128;
    for _ in 0..h {
        pow = pow.saturating_mul(base);
    }
    (n as u128).saturating_mul(choose).saturating_mul(pow)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

// ---------------------------------------------------------------------------
// Analytic failure bound.
// ---------------------------------------------------------------------------

/// Union-bound estimate of the probability that any valid witness sequence
/// exists, together with the side condition under which it is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureBound {
    /// `(gamma * n)^3 * n * beta^(gamma * (1 - alpha))`.
    pub bound: f64,
    /// Natural log of the bound; usable when `bound` underflows to zero.
    pub ln_bound: f64,
    /// Whether `alpha >= log_{1/beta}(2 e delta gamma d) / (delta - 1)` holds.
    pub premises_hold: bool,
}

/// Evaluates the failure-probability bound for the given parameters.
pub fn failure_probability_bound(
    n: u64,
    d: u64,
    beta: f64,
    delta: u32,
    gamma: u32,
    alpha: f64,
) -> Result<FailureBound, WitnessError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(WitnessError::ParamOutOfRange(format!(
            "beta = {beta} not in (0, 1)"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(WitnessError::ParamOutOfRange(format!(
            "alpha = {alpha} not in (0, 1)"
        )));
    }
    if delta < 2 {
        return Err(WitnessError::ParamOutOfRange(format!(
            "delta = {delta} must be at least 2"
        )));
    }
    if n < 1 || d < 1 || gamma < 1 {
        return Err(WitnessError::ParamOutOfRange(
            "n, d, gamma must be positive".into(),
        ));
    }
    let ln_inv_beta = (1.0 / beta).ln();
    let (nf, gf) = (n as f64, gamma as f64);
    let ln_bound = 3.0 * (gf.ln() + nf.ln()) + nf.ln() - gf * (1.0 - alpha) * ln_inv_beta;
    // Side condition: alpha * (delta - 1) * ln(1/beta) >= ln(2 e delta gamma d).
    let lhs = alpha * (delta as f64 - 1.0) * ln_inv_beta;
    let rhs = (2.0 * std::f64::consts::E * delta as f64 * gf * d as f64).ln();
    Ok(FailureBound {
        bound: ln_bound.exp(),
        ln_bound,
        premises_hold: lhs >= rhs,
    })
}

// ---------------------------------------------------------------------------
// File format.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessNodeRef {
    pub task: String,
    pub round: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessTripleFile {
    pub m: Vec<WitnessNodeRef>,
    pub m_prime: Vec<WitnessNodeRef>,
    pub pivot: Option<WitnessNodeRef>,
}

/// Interchange form: ordered triples with explicit node lists, so other
/// implementations can be checked differentially against this one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessFile {
    pub schema_version: u32,
    pub triples: Vec<WitnessTripleFile>,
}

/// Serializes a witness sequence with task names resolved through `graph`.
pub fn witness_to_file(ws: &WitnessSequence, graph: &LeveledTaskGraph) -> WitnessFile {
    let expand = |run: Option<Run>| -> Vec<WitnessNodeRef> {
        run.map(|r| {
            r.nodes()
                .map(|n| WitnessNodeRef {
                    task: graph.name(n.task).to_string(),
                    round: n.round,
                })
                .collect()
        })
        .unwrap_or_default()
    };
    WitnessFile {
        schema_version: 1,
        triples: ws
            .triples
            .iter()
            .map(|t| WitnessTripleFile {
                m: expand(t.m),
                m_prime: expand(t.m_prime),
                pivot: t.pivot.map(|p| WitnessNodeRef {
                    task: graph.name(p.task).to_string(),
                    round: p.round,
                }),
            })
            .collect(),
    }
}

/// Parses the interchange form back into runs, enforcing that each node list
/// is a contiguous single-task run in ascending round order.
pub fn witness_from_file(
    file: &WitnessFile,
    graph: &LeveledTaskGraph,
) -> Result<WitnessSequence, WitnessError> {
    let collapse = |nodes: &[WitnessNodeRef]| -> Result<Option<Run>, WitnessError> {
        let Some(first) = nodes.first() else {
            return Ok(None);
        };
        let task = graph
            .id(&first.task)
            .ok_or_else(|| WitnessError::Malformed(format!("unknown task {:?}", first.task)))?;
        let mut end = first.round;
        for node in &nodes[1..] {
            let t = graph
                .id(&node.task)
                .ok_or_else(|| WitnessError::Malformed(format!("unknown task {:?}", node.task)))?;
            if t != task || node.round != end + 1 {
                return Err(WitnessError::Malformed(
                    "node list is not a contiguous same-task run".into(),
                ));
            }
            end = node.round;
        }
        Ok(Some(Run::new(task, first.round, end)))
    };
    let triples = file
        .triples
        .iter()
        .map(|t| {
            Ok(WitnessTriple {
                m: collapse(&t.m)?,
                m_prime: collapse(&t.m_prime)?,
                pivot: t
                    .pivot
                    .as_ref()
                    .map(|p| {
                        graph
                            .id(&p.task)
                            .map(|task| WorkerNode {
                                task,
                                round: p.round,
                            })
                            .ok_or_else(|| {
                                WitnessError::Malformed(format!("unknown task {:?}", p.task))
                            })
                    })
                    .transpose()?,
            })
        })
        .collect::<Result<Vec<_>, WitnessError>>()?;
    Ok(WitnessSequence { triples })
}
