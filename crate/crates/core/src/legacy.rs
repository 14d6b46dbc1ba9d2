//! The earlier sequential protocols, kept for baseline comparison.
//!
//! The path protocol assigns one worker at a time and rolls back one task on
//! every REJECT, so under the dominant always-REJECT adversary its progress
//! is a +-1 random walk with up-step probability `1 - beta`. It terminates
//! in about `n / (1 - 2 beta)` rounds when `beta < 1/2` and takes
//! exponentially long once `beta > 1/2`; the walk analysis below makes both
//! regimes measurable. The rollback DAG protocol fares worse: a single
//! REJECT unwinds every task reachable from the rejected inputs, and on the
//! blocked-grid family built by [`build_infeasibility_dag`] it stalls already
//! at `beta > ln(c) / c^2` for blocks of size `c`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{AdversaryStrategy, MessageContent, MessageKind, Recipient};
use crate::task_graph::{GraphError, LeveledTaskGraph, TaskGraph, TaskId};
use crate::worker_graph::WorkerNode;

#[derive(Debug, Error)]
pub enum LegacyError {
    #[error("random walk is degenerate: p = {0}")]
    DegenerateWalk(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Birth-death walk on states `0..=n+1` with absorbing ends: `p` up,
/// `q = 1 - p` down. State `i` stands for the computation sitting at task
/// `i`; state 0 is the source, state `n+1` the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkModel {
    pub p: f64,
    pub q: f64,
    pub n: usize,
}

impl RandomWalkModel {
    pub fn new(p: f64, n: usize) -> Result<Self, LegacyError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(LegacyError::DegenerateWalk(p));
        }
        Ok(RandomWalkModel { p, q: 1.0 - p, n })
    }
}

/// Probability that the walk, started in state 1, reaches `n+1` before 0:
/// `(1 - q/p) / (1 - (q/p)^(n+1))`, or `1/(n+1)` in the symmetric case.
pub fn gambler_hitting_probability(model: &RandomWalkModel) -> f64 {
    let r = model.q / model.p;
    if (model.p - model.q).abs() < f64::EPSILON {
        1.0 / (model.n as f64 + 1.0)
    } else {
        (1.0 - r) / (1.0 - r.powi(model.n as i32 + 1))
    }
}

/// Counts how many of `trials` independent excursions from state 1 get
/// absorbed at the target rather than the source.
pub fn run_excursions(model: &RandomWalkModel, trials: u64, seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for _ in 0..trials {
        let mut state = 1usize;
        loop {
            if rng.gen::<f64>() < model.p {
                state += 1;
                if state == model.n + 1 {
                    hits += 1;
                    break;
                }
            } else {
                state -= 1;
                if state == 0 {
                    break;
                }
            }
        }
    }
    hits
}

/// Outcome of one sequential path-protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRun {
    pub terminated: bool,
    pub rounds: u64,
    pub source_sends: u64,
    pub target_receives: u64,
    pub honest_assignments: u64,
    pub malicious_assignments: u64,
    /// REJECTs swallowed at task 1, where no further rollback is possible.
    pub clamped_rejects: u64,
}

/// Simulates the sequential path protocol on `n` tasks. One supervisor
/// message exchange per round: an honest worker answers DONE and the
/// computation advances; a malicious worker answers per the strategy, where
/// a correct output counts as DONE, garbage as REJECT (roll back one task),
/// and silence as a timeout that only burns the round. The run ends when the
/// target accepts, or at `round_cap`.
pub fn simulate_path_protocol(
    n: usize,
    beta: f64,
    strategy: AdversaryStrategy,
    seed: u64,
    round_cap: u64,
) -> PathRun {
    assert!(n >= 1 && round_cap > 0);
    assert!((0.0..1.0).contains(&beta), "beta must lie in [0, 1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = PathRun {
        terminated: false,
        rounds: 0,
        source_sends: 0,
        target_receives: 0,
        honest_assignments: 0,
        malicious_assignments: 0,
        clamped_rejects: 0,
    };
    let mut task = 1usize;
    let mut assignment_counter = 0u32;
    while run.rounds < round_cap {
        run.rounds += 1;
        if task == 1 {
            run.source_sends += 1;
        }
        let malicious = rng.gen::<f64>() < beta;
        assignment_counter = assignment_counter.wrapping_add(1);
        let reply = if malicious {
            run.malicious_assignments += 1;
            let sender = WorkerNode {
                task: task as TaskId,
                round: assignment_counter,
            };
            strategy.decide(sender, Recipient::Target, MessageKind::SupervisorReply)
        } else {
            run.honest_assignments += 1;
            MessageContent::Correct
        };
        match reply {
            MessageContent::Correct => {
                if task == n {
                    // Hand the last output to the target; it verifies and
                    // accepts in one more exchange.
                    run.rounds += 1;
                    run.target_receives += 1;
                    run.terminated = true;
                    return run;
                }
                task += 1;
            }
            MessageContent::Garbage => {
                if task > 1 {
                    task -= 1;
                } else {
                    run.clamped_rejects += 1;
                }
            }
            MessageContent::Silent => {}
        }
    }
    run
}

/// Outcome of one rollback DAG-protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegacyDagRun {
    pub terminated: bool,
    pub rounds: u64,
    pub assignments: u64,
}

/// Simulates the rollback-based DAG protocol. Each round the supervisor
/// assigns fresh workers to every task outside the finished set `F` whose
/// predecessors are all in `F`. Honest workers report DONE; malicious ones
/// REJECT all their predecessors, which removes those tasks and everything
/// reachable from them from `F` at the end of the round (a silent worker
/// just burns its assignment). The run ends when every final task is in `F`,
/// or at `round_cap`.
pub fn simulate_legacy_dag_protocol(
    graph: &LeveledTaskGraph,
    beta: f64,
    strategy: AdversaryStrategy,
    seed: u64,
    round_cap: u64,
) -> LegacyDagRun {
    assert!(round_cap > 0);
    assert!((0.0..1.0).contains(&beta), "beta must lie in [0, 1)");
    let n = graph.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Descendant closure per task, as bitsets; rollbacks are then unions.
    let words = n.div_ceil(64);
    let mut reach = vec![0u64; n * words];
    let mut order: Vec<TaskId> = graph.tasks().collect();
    order.sort_by_key(|&v| std::cmp::Reverse(graph.depth(v)));
    for v in order {
        let vi = v as usize;
        reach[vi * words + vi / 64] |= 1 << (vi % 64);
        for &s in graph.sucs(v) {
            let (a, b) = (vi * words, s as usize * words);
            for w in 0..words {
                reach[a + w] |= reach[b + w];
            }
        }
    }

    let mut finished = vec![false; n];
    // Unfinished-predecessor counts keep the frontier test O(1) per task.
    let mut blocked: Vec<u32> = graph.tasks().map(|v| graph.preds(v).len() as u32).collect();
    let mut run = LegacyDagRun {
        terminated: false,
        rounds: 0,
        assignments: 0,
    };
    let mut assignment_counter = 0u32;
    while run.rounds < round_cap {
        run.rounds += 1;
        let mut done: Vec<TaskId> = Vec::new();
        let mut rollback = vec![0u64; words];
        let mut any_reject = false;
        for v in graph.tasks() {
            let vi = v as usize;
            if finished[vi] || blocked[vi] > 0 {
                continue;
            }
            run.assignments += 1;
            assignment_counter = assignment_counter.wrapping_add(1);
            let malicious = rng.gen::<f64>() < beta;
            let reply = if malicious {
                strategy.decide(
                    WorkerNode {
                        task: v,
                        round: assignment_counter,
                    },
                    Recipient::Target,
                    MessageKind::SupervisorReply,
                )
            } else {
                MessageContent::Correct
            };
            match reply {
                MessageContent::Correct => done.push(v),
                MessageContent::Garbage => {
                    // REJECT naming every predecessor: maximal rollback.
                    any_reject = true;
                    for &u in graph.preds(v) {
                        let base = u as usize * words;
                        for w in 0..words {
                            rollback[w] |= reach[base + w];
                        }
                    }
                }
                MessageContent::Silent => {}
            }
        }
        for v in done {
            finished[v as usize] = true;
            for &s in graph.sucs(v) {
                blocked[s as usize] -= 1;
            }
        }
        if any_reject {
            for vi in 0..n {
                if finished[vi] && rollback[vi / 64] >> (vi % 64) & 1 == 1 {
                    finished[vi] = false;
                    for &s in graph.sucs(vi as TaskId) {
                        blocked[s as usize] += 1;
                    }
                }
            }
        }
        debug_assert!(
            graph
                .tasks()
                .all(|v| !finished[v as usize]
                    || graph.preds(v).iter().all(|&u| finished[u as usize])),
            "finished set must stay downward closed"
        );
        if graph.final_tasks().iter().all(|&v| finished[v as usize]) {
            run.terminated = true;
            return run;
        }
    }
    run
}

/// The blocked-grid family on which the rollback protocol stalls:
/// `n_levels` levels of `c^2` tasks, each level split into `c` blocks of
/// `c`. Block `j` of one level connects to block `j` of the next by a
/// complete bipartite graph, and the `k`-th task of block `j` additionally
/// feeds the `k`-th task of every other block. Every degree is exactly
/// `2c - 1`.
pub fn build_infeasibility_dag(c: usize, n_levels: usize) -> Result<LeveledTaskGraph, GraphError> {
    assert!(c >= 2 && n_levels >= 2);
    let name = |level: usize, j: usize, k: usize| format!("l{level}_b{j}_k{k}");
    let mut tasks = Vec::with_capacity(n_levels * c * c);
    for level in 0..n_levels {
        for j in 0..c {
            for k in 0..c {
                tasks.push(name(level, j, k));
            }
        }
    }
    let mut edges = Vec::new();
    for level in 0..n_levels - 1 {
        for j in 0..c {
            for k in 0..c {
                for k2 in 0..c {
                    edges.push((name(level, j, k), name(level + 1, j, k2)));
                }
                for j2 in 0..c {
                    if j2 != j {
                        edges.push((name(level, j, k), name(level + 1, j2, k)));
                    }
                }
            }
        }
    }
    TaskGraph::build(&tasks, &edges)?.levelize()
}
