//! Shared fixtures for the benchmarks.

use supsim::protocol::{classify_by_reachability, Assignment, NodeStatus};
use supsim::task_graph::LeveledTaskGraph;
use supsim::worker_graph::{ScheduleWindow, WorkerGraph};

/// A mid-size leveled instance with a solved schedule window.
pub fn medium_instance(beta: f64) -> (LeveledTaskGraph, WorkerGraph) {
    let graph = supsim::gen::random_leveled(60, 5, 3, 7)
        .unwrap()
        .levelize()
        .unwrap();
    let (delta, gamma) = supsim::params::compute_params(
        graph.len(),
        graph.degree_bound(),
        beta,
        0.5,
        1.0,
        supsim::params::ConstantProfile::Lemma,
    )
    .unwrap();
    let wg = WorkerGraph::build(&graph, ScheduleWindow::new(delta, gamma));
    (graph, wg)
}

/// A small under-provisioned instance together with a failing assignment,
/// for the witness-construction benchmark.
pub fn failing_instance() -> (WorkerGraph, Assignment, Vec<NodeStatus>) {
    let graph = supsim::gen::random_leveled(18, 3, 2, 3)
        .unwrap()
        .levelize()
        .unwrap();
    let wg = WorkerGraph::build(&graph, ScheduleWindow::new(2, 6));
    for seed in 0.. {
        let assignment = Assignment::sample(&wg, 0.7, seed).unwrap();
        let statuses = classify_by_reachability(&wg, &assignment);
        if supsim::protocol::assignment_fails(&wg, &statuses) {
            return (wg, assignment, statuses);
        }
    }
    unreachable!("beta 0.7 with gamma 6 fails quickly");
}
