//! Shared helpers for the integration suites.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use supsim::protocol::{classify_by_reachability, Assignment, NodeStatus};
use supsim::task_graph::{LeveledTaskGraph, TaskGraph};
use supsim::worker_graph::{ScheduleWindow, WorkerGraph};

/// A random DAG over `n` tasks with edges drawn independently between
/// topologically ordered pairs; not leveled in general.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize, edge_prob: f64) -> TaskGraph {
    let tasks: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < edge_prob {
                edges.push((format!("v{i}"), format!("v{j}")));
            }
        }
    }
    TaskGraph::build(&tasks, &edges).expect("forward edges cannot form a cycle")
}

/// A random leveled instance with its worker graph.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_tasks: usize,
    max_gamma: u32,
    max_delta: u32,
) -> (LeveledTaskGraph, WorkerGraph) {
    let n = rng.gen_range(1..=max_tasks);
    let width = rng.gen_range(1..=4);
    let cap = rng.gen_range(1..=3);
    let graph = supsim::gen::random_leveled(n, width, cap, rng.gen())
        .unwrap()
        .levelize()
        .unwrap();
    let window = ScheduleWindow::new(rng.gen_range(1..=max_delta), rng.gen_range(1..=max_gamma));
    let wg = WorkerGraph::build(&graph, window);
    (graph, wg)
}

/// Samples assignments until one makes the computation fail, returning the
/// assignment with its oracle statuses.
pub fn sample_failing(
    wg: &WorkerGraph,
    beta: f64,
    rng: &mut ChaCha8Rng,
    max_tries: usize,
) -> Option<(Assignment, Vec<NodeStatus>)> {
    for _ in 0..max_tries {
        let assignment = Assignment::sample(wg, beta, rng.gen()).unwrap();
        let statuses = classify_by_reachability(wg, &assignment);
        if supsim::protocol::assignment_fails(wg, &statuses) {
            return Some((assignment, statuses));
        }
    }
    None
}

/// Samples assignments until one makes the computation succeed.
pub fn sample_succeeding(
    wg: &WorkerGraph,
    beta: f64,
    rng: &mut ChaCha8Rng,
    max_tries: usize,
) -> Option<(Assignment, Vec<NodeStatus>)> {
    for _ in 0..max_tries {
        let assignment = Assignment::sample(wg, beta, rng.gen()).unwrap();
        let statuses = classify_by_reachability(wg, &assignment);
        if !supsim::protocol::assignment_fails(wg, &statuses) {
            return Some((assignment, statuses));
        }
    }
    None
}
