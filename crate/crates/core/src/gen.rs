//! Graph generators for experiments and tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::task_graph::{GraphError, TaskGraph};

/// A directed path of `n` tasks `v0 -> v1 -> ... -> v{n-1}`.
pub fn path(n: usize) -> Result<TaskGraph, GraphError> {
    let tasks: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let edges: Vec<(String, String)> = (1..n)
        .map(|i| (format!("v{}", i - 1), format!("v{i}")))
        .collect();
    TaskGraph::build(&tasks, &edges)
}

/// The four-task diamond `a -> {b, c} -> d`.
pub fn diamond() -> Result<TaskGraph, GraphError> {
    TaskGraph::build(
        &["a", "b", "c", "d"],
        &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")],
    )
}

/// A random leveled DAG with `n` tasks, at most `max_width` tasks per level,
/// and in- and out-degree at most `degree_cap`. Each non-initial task draws
/// its predecessor count uniformly from `1..=degree_cap` and picks that many
/// distinct previous-level tasks among those with spare out-degree, so the
/// degree bound holds exactly.
pub fn random_leveled(
    n: usize,
    max_width: usize,
    degree_cap: usize,
    seed: u64,
) -> Result<TaskGraph, GraphError> {
    assert!(n >= 1 && max_width >= 1 && degree_cap >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks: Vec<String> = Vec::with_capacity(n);
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut built = 0usize;
    let mut level = 0usize;
    let mut prev_names: Vec<String> = Vec::new();
    while built < n {
        let mut width = rng.gen_range(1..=max_width).min(n - built);
        if level > 0 {
            // Keep one out-degree slot available per new task.
            width = width.min(prev_names.len() * degree_cap);
        }
        let names: Vec<String> = (0..width).map(|j| format!("t{level}_{j}")).collect();
        tasks.extend(names.iter().cloned());
        if level > 0 {
            let w_prev = prev_names.len();
            let mut out_degree = vec![0usize; w_prev];
            let mut chosen: Vec<Vec<usize>> = vec![Vec::new(); width];
            // First a mandatory predecessor per task, so no task floats up
            // to level zero; the slot reservation above guarantees budget.
            for picks in chosen.iter_mut() {
                let open: Vec<usize> = (0..w_prev)
                    .filter(|&i| out_degree[i] < degree_cap)
                    .collect();
                let &i = open.choose(&mut rng).expect("reserved out-degree slot");
                out_degree[i] += 1;
                picks.push(i);
            }
            // Then optional extra predecessors up to the degree cap.
            for picks in chosen.iter_mut() {
                let want = rng.gen_range(1..=degree_cap);
                if want > 1 {
                    let mut open: Vec<usize> = (0..w_prev)
                        .filter(|&i| out_degree[i] < degree_cap && !picks.contains(&i))
                        .collect();
                    open.shuffle(&mut rng);
                    for &i in open.iter().take(want - 1) {
                        out_degree[i] += 1;
                        picks.push(i);
                    }
                }
            }
            for (slot, picks) in chosen.iter().enumerate() {
                for &i in picks {
                    edges.push((prev_names[i].clone(), names[slot].clone()));
                }
            }
        }
        built += width;
        prev_names = names;
        level += 1;
    }
    TaskGraph::build(&tasks, &edges)
}
