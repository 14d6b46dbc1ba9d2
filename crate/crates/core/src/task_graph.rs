//! Task DAGs: validation, depth maps, and the leveling transformation.
//!
//! Tasks are identified by opaque string names at the API boundary and by
//! dense [`TaskId`] indices internally. The depth of a task is the length of
//! the longest directed path from an initial task to it (initial tasks have
//! depth 1). A leveled graph only has edges between adjacent depths; any
//! graph is brought into that form by subdividing long edges with relay
//! tasks.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense index of a task inside a [`TaskGraph`].
pub type TaskId = u32;

/// Errors from building or loading task graphs.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("task set is empty")]
    EmptyTaskSet,
    #[error("duplicate task name {0:?}")]
    DuplicateTask(String),
    #[error("edge references unknown task {0:?}")]
    UnknownTask(String),
    #[error("duplicate edge ({0:?}, {1:?})")]
    DuplicateEdge(String, String),
    #[error("edge set contains a directed cycle")]
    CycleDetected,
    #[error("graph i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Serialized form of a task graph: `{"tasks": [...], "edges": [[u, v], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskGraphFile {
    pub tasks: Vec<String>,
    pub edges: Vec<(String, String)>,
}

/// A validated directed acyclic task graph with derived depth information.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskGraph {
    names: Vec<String>,
    ids: HashMap<String, TaskId>,
    preds: Vec<Vec<TaskId>>,
    sucs: Vec<Vec<TaskId>>,
    edges: Vec<(TaskId, TaskId)>,
    depth: Vec<u32>,
    depth_of_graph: u32,
    initial: Vec<TaskId>,
    finals: Vec<TaskId>,
}

impl TaskGraph {
    /// Builds and validates a task graph from declared tasks and edges.
    pub fn build<S: AsRef<str>>(tasks: &[S], edges: &[(S, S)]) -> Result<Self, GraphError> {
        if tasks.is_empty() {
            return Err(GraphError::EmptyTaskSet);
        }
        let mut names = Vec::with_capacity(tasks.len());
        let mut ids = HashMap::with_capacity(tasks.len());
        for t in tasks {
            let name = t.as_ref().to_string();
            if ids.insert(name.clone(), names.len() as TaskId).is_some() {
                return Err(GraphError::DuplicateTask(name));
            }
            names.push(name);
        }
        let n = names.len();
        let mut preds = vec![Vec::new(); n];
        let mut sucs = vec![Vec::new(); n];
        let mut edge_ids = Vec::with_capacity(edges.len());
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for (u, v) in edges {
            let (u, v) = (u.as_ref(), v.as_ref());
            let &ui = ids
                .get(u)
                .ok_or_else(|| GraphError::UnknownTask(u.into()))?;
            let &vi = ids
                .get(v)
                .ok_or_else(|| GraphError::UnknownTask(v.into()))?;
            if ui == vi {
                // A self-loop is a one-node cycle.
                return Err(GraphError::CycleDetected);
            }
            if !seen.insert((ui, vi)) {
                return Err(GraphError::DuplicateEdge(u.into(), v.into()));
            }
            sucs[ui as usize].push(vi);
            preds[vi as usize].push(ui);
            edge_ids.push((ui, vi));
        }
        for adj in preds.iter_mut().chain(sucs.iter_mut()) {
            adj.sort_unstable();
        }

        // Single topological pass computes depths; D(v) is unique so no tie
        // breaking is involved.
        let mut indeg: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut queue: Vec<TaskId> = (0..n as TaskId)
            .filter(|&v| indeg[v as usize] == 0)
            .collect();
        let mut depth = vec![1u32; n];
        let mut processed = 0;
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            processed += 1;
            for &v in &sucs[u as usize] {
                depth[v as usize] = depth[v as usize].max(depth[u as usize] + 1);
                indeg[v as usize] -= 1;
                if indeg[v as usize] == 0 {
                    queue.push(v);
                }
            }
        }
        if processed != n {
            return Err(GraphError::CycleDetected);
        }

        let initial: Vec<TaskId> = (0..n as TaskId)
            .filter(|&v| preds[v as usize].is_empty())
            .collect();
        let finals: Vec<TaskId> = (0..n as TaskId)
            .filter(|&v| sucs[v as usize].is_empty())
            .collect();
        let depth_of_graph = depth.iter().copied().max().unwrap_or(1);

        Ok(TaskGraph {
            names,
            ids,
            preds,
            sucs,
            edges: edge_ids,
            depth,
            depth_of_graph,
            initial,
            finals,
        })
    }

    /// Number of tasks.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, v: TaskId) -> &str {
        &self.names[v as usize]
    }

    pub fn id(&self, name: &str) -> Option<TaskId> {
        self.ids.get(name).copied()
    }

    pub fn tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        0..self.names.len() as TaskId
    }

    pub fn edges(&self) -> &[(TaskId, TaskId)] {
        &self.edges
    }

    pub fn preds(&self, v: TaskId) -> &[TaskId] {
        &self.preds[v as usize]
    }

    pub fn sucs(&self, v: TaskId) -> &[TaskId] {
        &self.sucs[v as usize]
    }

    /// Depth `D(v)`: 1 for initial tasks, `1 + max` over predecessors else.
    pub fn depth(&self, v: TaskId) -> u32 {
        self.depth[v as usize]
    }

    /// Depth of the graph, `D = max_v D(v)`.
    pub fn depth_of_graph(&self) -> u32 {
        self.depth_of_graph
    }

    pub fn initial_tasks(&self) -> &[TaskId] {
        &self.initial
    }

    pub fn final_tasks(&self) -> &[TaskId] {
        &self.finals
    }

    /// Bound `d >= max(indeg, outdeg)` over all tasks.
    pub fn degree_bound(&self) -> usize {
        self.tasks()
            .map(|v| self.preds(v).len().max(self.sucs(v).len()))
            .max()
            .unwrap_or(0)
    }

    /// All ancestors of `v` (tasks with a directed path to `v`), excluding `v`.
    pub fn ancestors(&self, v: TaskId) -> Vec<TaskId> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<TaskId> = self.preds(v).to_vec();
        let mut out = Vec::new();
        while let Some(u) = stack.pop() {
            if seen[u as usize] {
                continue;
            }
            seen[u as usize] = true;
            out.push(u);
            stack.extend_from_slice(self.preds(u));
        }
        out.sort_unstable();
        out
    }

    /// Replaces every edge spanning more than one level with a chain of relay
    /// tasks, one per intermediate level. Relay names are deterministic
    /// (`relay(u,v,k)`) so runs are reproducible and provenance inspectable.
    pub fn levelize(&self) -> Result<LeveledTaskGraph, GraphError> {
        let mut tasks: Vec<String> = self.names.clone();
        let mut edges: Vec<(String, String)> = Vec::new();
        let mut relays = HashMap::new();
        for &(u, v) in &self.edges {
            let span = self.depth(v) - self.depth(u);
            if span == 1 {
                edges.push((self.name(u).to_string(), self.name(v).to_string()));
            } else {
                let mut prev = self.name(u).to_string();
                for k in 1..span {
                    let relay = format!("relay({},{},{})", self.name(u), self.name(v), k);
                    relays.insert(relay.clone(), (u, v, k));
                    tasks.push(relay.clone());
                    edges.push((prev, relay.clone()));
                    prev = relay;
                }
                edges.push((prev, self.name(v).to_string()));
            }
        }
        let graph = TaskGraph::build(&tasks, &edges)?;
        let relay_provenance = relays
            .into_iter()
            .map(|(name, origin)| (graph.id(&name).expect("relay was declared"), origin))
            .collect();
        let leveled = LeveledTaskGraph {
            graph,
            relay_provenance,
        };
        leveled.assert_leveled(self);
        Ok(leveled)
    }

    /// Loads the JSON graph format.
    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)?;
        let file: TaskGraphFile = serde_json::from_str(&text)?;
        TaskGraph::build(&file.tasks, &file.edges)
    }

    /// Serializes to the JSON graph format. `store` followed by `load`
    /// followed by `store` reproduces the file byte for byte.
    pub fn to_file(&self) -> TaskGraphFile {
        TaskGraphFile {
            tasks: self.names.clone(),
            edges: self
                .edges
                .iter()
                .map(|&(u, v)| (self.name(u).to_string(), self.name(v).to_string()))
                .collect(),
        }
    }

    pub fn store(&self, path: &Path) -> Result<(), GraphError> {
        let mut text = serde_json::to_string_pretty(&self.to_file())?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

impl fmt::Display for TaskGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TaskGraph(n={}, edges={}, depth={})",
            self.len(),
            self.edges.len(),
            self.depth_of_graph
        )
    }
}

/// A task graph in which every edge connects adjacent levels, together with
/// the provenance of inserted relay tasks: relay id -> (u, v, k) for the k-th
/// relay on the original edge (u, v).
#[derive(Debug, Clone)]
pub struct LeveledTaskGraph {
    graph: TaskGraph,
    relay_provenance: HashMap<TaskId, (TaskId, TaskId, u32)>,
}

impl LeveledTaskGraph {
    /// Provenance of relay tasks, keyed by relay id in the leveled graph;
    /// values are expressed in the ids of the source graph.
    pub fn relay_provenance(&self) -> &HashMap<TaskId, (TaskId, TaskId, u32)> {
        &self.relay_provenance
    }

    pub fn relay_count(&self) -> usize {
        self.relay_provenance.len()
    }

    fn assert_leveled(&self, source: &TaskGraph) {
        for &(u, v) in self.graph.edges() {
            debug_assert_eq!(
                self.graph.depth(v),
                self.graph.depth(u) + 1,
                "leveled edge must connect adjacent levels"
            );
        }
        debug_assert_eq!(self.graph.depth_of_graph(), source.depth_of_graph());
    }
}

impl std::ops::Deref for LeveledTaskGraph {
    type Target = TaskGraph;

    fn deref(&self) -> &TaskGraph {
        &self.graph
    }
}
