//! The worker graph: one node per (task, assignment round).
//!
//! For a leveled task graph, workers are assigned to task `v` once per round
//! over the window `t_min(v) = (D(v)-1)*delta + 1` through
//! `t_max(v) = (D(v)-1)*delta + gamma`. A worker may send data to another
//! worker of the same task or of a successor task assigned within the next
//! `2*delta` rounds. Edges are represented implicitly through window
//! arithmetic; methods below enumerate them on demand.

use serde::{Deserialize, Serialize};

use crate::task_graph::{LeveledTaskGraph, TaskId};

/// Scheduling window parameters: `delta` is the round offset between levels,
/// `gamma` the number of workers assigned per task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleWindow {
    pub delta: u32,
    pub gamma: u32,
}

impl ScheduleWindow {
    pub fn new(delta: u32, gamma: u32) -> Self {
        assert!(delta >= 1, "delta must be at least 1");
        assert!(gamma >= 1, "gamma must be at least 1");
        ScheduleWindow { delta, gamma }
    }
}

/// A worker-graph node: the worker assigned to `task` in round `round`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorkerNode {
    pub task: TaskId,
    pub round: u32,
}

/// Which in-window senders to enumerate for a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowRelation {
    SameTask,
    PrecedingTask,
}

/// First and last assignment rounds for a task of depth `depth`.
pub fn assignment_window(depth: u32, window: ScheduleWindow) -> (u32, u32) {
    let t_min = (depth - 1) * window.delta + 1;
    (t_min, t_min + window.gamma - 1)
}

/// The worker graph of a leveled task graph. Owns copies of the adjacency
/// and depth data it needs, so it can be shared read-only across trials
/// without keeping the task graph alive.
#[derive(Debug, Clone)]
pub struct WorkerGraph {
    delta: u32,
    gamma: u32,
    n_tasks: usize,
    t_min: Vec<u32>,
    preds: Vec<Vec<TaskId>>,
    sucs: Vec<Vec<TaskId>>,
    initial: Vec<bool>,
    final_: Vec<bool>,
    depth_of_graph: u32,
}

impl WorkerGraph {
    /// Materializes the worker graph for a leveled task graph.
    pub fn build(graph: &LeveledTaskGraph, window: ScheduleWindow) -> Self {
        let n_tasks = graph.len();
        let t_min = graph
            .tasks()
            .map(|v| assignment_window(graph.depth(v), window).0)
            .collect();
        let preds = graph.tasks().map(|v| graph.preds(v).to_vec()).collect();
        let sucs = graph.tasks().map(|v| graph.sucs(v).to_vec()).collect();
        let mut initial = vec![false; n_tasks];
        for &v in graph.initial_tasks() {
            initial[v as usize] = true;
        }
        let mut final_ = vec![false; n_tasks];
        for &v in graph.final_tasks() {
            final_[v as usize] = true;
        }
        WorkerGraph {
            delta: window.delta,
            gamma: window.gamma,
            n_tasks,
            t_min,
            preds,
            sucs,
            initial,
            final_,
            depth_of_graph: graph.depth_of_graph(),
        }
    }

    pub fn delta(&self) -> u32 {
        self.delta
    }

    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    pub fn window(&self) -> ScheduleWindow {
        ScheduleWindow {
            delta: self.delta,
            gamma: self.gamma,
        }
    }

    pub fn task_count(&self) -> usize {
        self.n_tasks
    }

    /// Total number of worker nodes, `n * gamma`.
    pub fn node_count(&self) -> usize {
        self.n_tasks * self.gamma as usize
    }

    /// Number of rounds in the schedule, `gamma + (D - 1) * delta`.
    pub fn total_rounds(&self) -> u32 {
        self.gamma + (self.depth_of_graph - 1) * self.delta
    }

    pub fn t_min(&self, v: TaskId) -> u32 {
        self.t_min[v as usize]
    }

    pub fn t_max(&self, v: TaskId) -> u32 {
        self.t_min[v as usize] + self.gamma - 1
    }

    pub fn preds(&self, v: TaskId) -> &[TaskId] {
        &self.preds[v as usize]
    }

    pub fn sucs(&self, v: TaskId) -> &[TaskId] {
        &self.sucs[v as usize]
    }

    pub fn is_initial(&self, v: TaskId) -> bool {
        self.initial[v as usize]
    }

    pub fn is_final(&self, v: TaskId) -> bool {
        self.final_[v as usize]
    }

    pub fn contains(&self, node: WorkerNode) -> bool {
        (node.task as usize) < self.n_tasks
            && node.round >= self.t_min(node.task)
            && node.round <= self.t_max(node.task)
    }

    /// Dense index of a node; nodes of one task are consecutive.
    pub fn node_index(&self, node: WorkerNode) -> usize {
        debug_assert!(self.contains(node));
        node.task as usize * self.gamma as usize + (node.round - self.t_min(node.task)) as usize
    }

    /// All nodes in canonical order (task-major, round ascending).
    pub fn nodes(&self) -> impl Iterator<Item = WorkerNode> + '_ {
        (0..self.n_tasks as TaskId).flat_map(move |task| {
            (self.t_min(task)..=self.t_max(task)).map(move |round| WorkerNode { task, round })
        })
    }

    /// The rounds of `sender_task` workers that may send to a worker of some
    /// task assigned in `round`: `[max(round - 2*delta, t_min), round - 1]`,
    /// clipped into the sender task's assignment window. May be empty.
    pub fn incoming_window(&self, sender_task: TaskId, round: u32) -> (u32, u32) {
        let lo = self
            .t_min(sender_task)
            .max(round.saturating_sub(2 * self.delta));
        let hi = (round - 1).min(self.t_max(sender_task));
        (lo, hi)
    }

    /// In-window senders for `node`, newest first. For `PrecedingTask`, the
    /// windows of all predecessor tasks are concatenated in task order, each
    /// newest first.
    pub fn in_window_predecessors(
        &self,
        node: WorkerNode,
        relation: WindowRelation,
    ) -> Vec<WorkerNode> {
        debug_assert!(self.contains(node));
        let mut out = Vec::new();
        match relation {
            WindowRelation::SameTask => {
                let (lo, hi) = self.incoming_window(node.task, node.round);
                if lo <= hi {
                    out.extend((lo..=hi).rev().map(|round| WorkerNode {
                        task: node.task,
                        round,
                    }));
                }
            }
            WindowRelation::PrecedingTask => {
                for &u in self.preds(node.task) {
                    let (lo, hi) = self.incoming_window(u, node.round);
                    if lo <= hi {
                        out.extend((lo..=hi).rev().map(|round| WorkerNode { task: u, round }));
                    }
                }
            }
        }
        out
    }

    /// Enumerates all edges; `same_task` selects the same-task edge set,
    /// otherwise the cross-task set. Intended for tests and debug export.
    pub fn edges(&self, same_task: bool) -> Vec<(WorkerNode, WorkerNode)> {
        let mut out = Vec::new();
        for node in self.nodes() {
            let targets: Vec<TaskId> = if same_task {
                vec![node.task]
            } else {
                self.sucs(node.task).to_vec()
            };
            for task in targets {
                for round in node.round + 1..=node.round + 2 * self.delta {
                    let to = WorkerNode { task, round };
                    if self.contains(to) {
                        out.push((node, to));
                    }
                }
            }
        }
        out
    }

    /// Debug export of the node and edge lists. Large: gate behind a flag.
    pub fn export_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes()
            .map(|n| serde_json::json!({"task": n.task, "round": n.round}))
            .collect();
        let edge = |(a, b): (WorkerNode, WorkerNode)| serde_json::json!([{"task": a.task, "round": a.round}, {"task": b.task, "round": b.round}]);
        serde_json::json!({
            "delta": self.delta,
            "gamma": self.gamma,
            "nodes": nodes,
            "same_task_edges": self.edges(true).into_iter().map(edge).collect::<Vec<_>>(),
            "cross_task_edges": self.edges(false).into_iter().map(edge).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task_graph::TaskGraph;

    /// The 6-task, 3-level example: two tasks per level.
    fn six_task_graph() -> LeveledTaskGraph {
        TaskGraph::build(
            &["a0", "a1", "b0", "b1", "c0", "c1"],
            &[
                ("a0", "b0"),
                ("a1", "b0"),
                ("a1", "b1"),
                ("b0", "c0"),
                ("b1", "c0"),
                ("b1", "c1"),
            ],
        )
        .unwrap()
        .levelize()
        .unwrap()
    }

    #[test]
    fn assignment_window_formula() {
        let w = ScheduleWindow::new(1, 13);
        assert_eq!(assignment_window(1, w), (1, 13));
        assert_eq!(assignment_window(2, w), (2, 14));
        assert_eq!(assignment_window(3, ScheduleWindow::new(2, 5)), (5, 9));
    }

    #[test]
    fn node_count_matches_n_gamma() {
        let g = six_task_graph();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(1, 13));
        assert_eq!(wg.node_count(), 78);
        assert_eq!(wg.nodes().count(), 78);
        assert_eq!(wg.total_rounds(), 13 + 2);
    }

    #[test]
    fn same_task_out_edges_span_two_delta() {
        let g = six_task_graph();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(1, 13));
        let v = g.id("a0").unwrap();
        let from = WorkerNode { task: v, round: 3 };
        let out: Vec<WorkerNode> = wg
            .edges(true)
            .into_iter()
            .filter(|&(a, _)| a == from)
            .map(|(_, b)| b)
            .collect();
        assert_eq!(
            out,
            vec![
                WorkerNode { task: v, round: 4 },
                WorkerNode { task: v, round: 5 }
            ]
        );
    }

    #[test]
    fn single_task_single_worker() {
        let g = TaskGraph::build(&["only"], &[])
            .unwrap()
            .levelize()
            .unwrap();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(3, 1));
        assert_eq!(wg.node_count(), 1);
        assert!(wg.edges(true).is_empty());
        assert!(wg.edges(false).is_empty());
    }

    #[test]
    fn first_worker_has_no_same_task_window() {
        let g = six_task_graph();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(2, 6));
        let v = g.id("b0").unwrap();
        let first = WorkerNode {
            task: v,
            round: wg.t_min(v),
        };
        assert!(wg
            .in_window_predecessors(first, WindowRelation::SameTask)
            .is_empty());
    }

    #[test]
    fn same_task_window_size_two_delta() {
        let g = six_task_graph();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(1, 13));
        let v = g.id("a1").unwrap();
        let node = WorkerNode {
            task: v,
            round: wg.t_min(v) + 3,
        };
        let preds = wg.in_window_predecessors(node, WindowRelation::SameTask);
        assert_eq!(preds.len(), 2);
        // Newest first.
        assert_eq!(preds[0].round, node.round - 1);
        assert_eq!(preds[1].round, node.round - 2);
    }

    #[test]
    fn initial_task_has_no_preceding_window() {
        let g = six_task_graph();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(1, 13));
        let v = g.id("a0").unwrap();
        let node = WorkerNode { task: v, round: 5 };
        assert!(wg
            .in_window_predecessors(node, WindowRelation::PrecedingTask)
            .is_empty());
    }

    #[test]
    fn edge_sets_are_disjoint_and_rounds_increase() {
        let g = six_task_graph();
        let wg = WorkerGraph::build(&g, ScheduleWindow::new(2, 5));
        let same = wg.edges(true);
        let cross = wg.edges(false);
        for &(a, b) in same.iter().chain(cross.iter()) {
            assert!(b.round > a.round);
        }
        let same_set: std::collections::HashSet<_> = same.into_iter().collect();
        assert!(cross.iter().all(|e| !same_set.contains(e)));
    }
}
