//! Simulator and analysis toolkit for supervised distributed computing
//! under adversarial workers.
//!
//! A reliable supervisor schedules a DAG of tasks onto sampled workers, any
//! constant fraction `beta < 1` of which may be malicious. Workers verify each
//! other's outputs, so the supervisor never touches task data. This crate
//! provides:
//!
//! - [`task_graph`]: task DAGs, depth maps, and the leveling transformation.
//! - [`worker_graph`]: the (task, round) grid of worker assignments with its
//!   windowed communication edges.
//! - [`protocol`]: a round-by-round simulation of the pipelined scheduling
//!   algorithm, plus an independent reachability classifier used as an oracle.
//! - [`witness`]: witness sequences, the certificate structure extracted from
//!   failed executions, with checkers, constructions, enumeration, and the
//!   analytic failure-probability bound.
//! - [`legacy`]: the earlier sequential path protocol and rollback-based DAG
//!   protocol, with the random-walk analysis that shows where they break down.
//! - [`params`], [`gen`], [`harness`]: parameter solving, graph generators,
//!   and the seeded Monte Carlo trial driver.

pub mod gen;
pub mod harness;
pub mod legacy;
pub mod params;
pub mod protocol;
pub mod task_graph;
pub mod witness;
pub mod worker_graph;

pub use protocol::{
    classify_by_reachability, simulate, AdversaryStrategy, Assignment, ExecutionTrace, Label,
    Metrics, NodeStatus, SimError,
};
pub use task_graph::{GraphError, LeveledTaskGraph, TaskGraph, TaskId};
pub use witness::{WitnessError, WitnessSequence, WitnessTriple};
pub use worker_graph::{ScheduleWindow, WorkerGraph, WorkerNode};

/// SplitMix64 step, used to derive independent per-trial and per-message
/// seeds from a master seed. Stable across platforms and releases.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a stream index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x51_7c_c1_b7_27_22_0a_95)))
}
