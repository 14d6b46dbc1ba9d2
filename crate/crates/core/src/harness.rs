//! Monte Carlo trial driver: resolves a configuration into an instance,
//! runs seeded independent trials (in parallel), and aggregates the results.
//!
//! Reproducibility contract: the pair (config, master seed) fully determines
//! every output artifact. Per-trial seeds derive from the master seed and
//! the trial index, so the result of trial `i` does not depend on the
//! concurrency level, and rows are always emitted in trial order.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::gen;
use crate::legacy;
use crate::params::{compute_params, ConstantProfile, ParamError};
use crate::protocol::{self, AdversaryStrategy, Assignment, Label, SimError};
use crate::task_graph::{GraphError, LeveledTaskGraph, TaskGraph};
use crate::witness::{failure_probability_bound, WitnessError};
use crate::worker_graph::{ScheduleWindow, WorkerGraph};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("failed to load graph: {0}")]
    GraphLoadFailed(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Witness(#[from] WitnessError),
    #[error("i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Where the task graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    File(PathBuf),
    Spec(GraphSpec),
}

/// Built-in graph families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphSpec {
    Path {
        n: usize,
    },
    Diamond,
    Random {
        n: usize,
        max_width: usize,
        degree_cap: usize,
    },
    Infeasible {
        c: usize,
        n_levels: usize,
    },
}

/// Schedule parameters: given explicitly or solved from `(alpha, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamSource {
    Explicit {
        delta: u32,
        gamma: u32,
    },
    Auto {
        alpha: f64,
        hp_exponent: f64,
        profile: ConstantProfile,
    },
}

/// Adversary behavior; per-trial strategy seeds derive from the trial seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversarySpec {
    Never,
    Always,
    Prob(f64),
}

impl AdversarySpec {
    /// The concrete strategy of one trial; probabilistic decisions get a
    /// stream split off the trial seed.
    pub fn strategy(&self, trial_seed: u64) -> AdversaryStrategy {
        match *self {
            AdversarySpec::Never => AdversaryStrategy::NeverCorrect,
            AdversarySpec::Always => AdversaryStrategy::AlwaysCorrect,
            AdversarySpec::Prob(p) => AdversaryStrategy::ProbabilisticCorrect {
                p,
                seed: derive_seed(trial_seed, 1),
            },
        }
    }

    pub fn label(&self) -> String {
        match self {
            AdversarySpec::Never => "never".into(),
            AdversarySpec::Always => "always".into(),
            AdversarySpec::Prob(p) => format!("prob:{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Main,
    LegacyPath,
    LegacyDag,
}

impl Protocol {
    pub fn label(&self) -> &'static str {
        match self {
            Protocol::Main => "main",
            Protocol::LegacyPath => "legacy_path",
            Protocol::LegacyDag => "legacy_dag",
        }
    }
}

/// One experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub graph: GraphSource,
    pub beta: f64,
    pub params: ParamSource,
    pub adversary: AdversarySpec,
    pub protocol: Protocol,
    pub trials: u64,
    pub seed: u64,
    /// Round budget for the legacy protocols, which need not terminate.
    pub round_cap: u64,
}

/// One CSV row; all values are exact counters so serialization is
/// byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRow {
    pub schema_version: u32,
    pub protocol: String,
    pub trial: u64,
    pub seed: u64,
    pub success: bool,
    pub rounds: u64,
    pub tasks: u64,
    pub honest_nodes: u64,
    pub malicious_nodes: u64,
    pub honest_executions: u64,
    pub verifications: u64,
    pub assignments: u64,
    pub introductions: u64,
    pub source_sends: u64,
    pub target_receives: u64,
}

/// Mean with a normal-approximation 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

fn mean_ci(values: impl Iterator<Item = f64> + Clone) -> MeanCi {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return MeanCi {
            mean: 0.0,
            lo: 0.0,
            hi: 0.0,
        };
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let half = 1.96 * (var / n).sqrt();
    MeanCi {
        mean,
        lo: mean - half,
        hi: mean + half,
    }
}

fn binomial_ci(successes: u64, n: u64) -> MeanCi {
    if n == 0 {
        return MeanCi {
            mean: 0.0,
            lo: 0.0,
            hi: 0.0,
        };
    }
    let p = successes as f64 / n as f64;
    let half = 1.96 * (p * (1.0 - p) / n as f64).sqrt();
    MeanCi {
        mean: p,
        lo: (p - half).max(0.0),
        hi: (p + half).min(1.0),
    }
}

/// Aggregate statistics; every field is recomputable from the raw rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub schema_version: u32,
    pub trials: u64,
    pub success_rate: MeanCi,
    pub rounds: MeanCi,
    pub max_rounds: u64,
    pub executions_per_task: MeanCi,
    pub verifications_per_honest: MeanCi,
    pub source_sends: MeanCi,
    pub target_receives: MeanCi,
}

/// Computes aggregates from raw rows; the stored aggregate file is exactly
/// this function applied to the stored rows.
pub fn aggregates_from_rows(rows: &[TrialRow]) -> Aggregates {
    let trials = rows.len() as u64;
    let successes = rows.iter().filter(|r| r.success).count() as u64;
    Aggregates {
        schema_version: 1,
        trials,
        success_rate: binomial_ci(successes, trials),
        rounds: mean_ci(rows.iter().map(|r| r.rounds as f64)),
        max_rounds: rows.iter().map(|r| r.rounds).max().unwrap_or(0),
        executions_per_task: mean_ci(
            rows.iter()
                .map(|r| r.honest_executions as f64 / r.tasks.max(1) as f64),
        ),
        verifications_per_honest: mean_ci(
            rows.iter()
                .map(|r| r.verifications as f64 / r.honest_nodes.max(1) as f64),
        ),
        source_sends: mean_ci(rows.iter().map(|r| r.source_sends as f64)),
        target_receives: mean_ci(rows.iter().map(|r| r.target_receives as f64)),
    }
}

/// The instance a configuration resolves to.
#[derive(Debug, Clone)]
pub struct ResolvedSetup {
    pub graph: LeveledTaskGraph,
    pub delta: u32,
    pub gamma: u32,
    pub degree_bound: usize,
    /// Side-condition check of the analytic bound, when parameters were
    /// solved automatically.
    pub premises_hold: Option<bool>,
}

/// Full result of [`run_trials`].
#[derive(Debug, Clone)]
pub struct TrialReport {
    pub setup: ResolvedSetup,
    pub rows: Vec<TrialRow>,
    /// Absent when zero trials were requested.
    pub aggregates: Option<Aggregates>,
}

/// Stream constants for seed derivation.
const GRAPH_STREAM: u64 = 0xA11CE;
const SWEEP_STREAM: u64 = 0x5EED5;

pub fn resolve_graph(source: &GraphSource, seed: u64) -> Result<LeveledTaskGraph, HarnessError> {
    let graph = match source {
        GraphSource::File(path) => TaskGraph::load(path)
            .map_err(|e| HarnessError::GraphLoadFailed(format!("{}: {e}", path.display())))?,
        GraphSource::Spec(spec) => match *spec {
            GraphSpec::Path { n } => gen::path(n)?,
            GraphSpec::Diamond => gen::diamond()?,
            GraphSpec::Random {
                n,
                max_width,
                degree_cap,
            } => gen::random_leveled(n, max_width, degree_cap, derive_seed(seed, GRAPH_STREAM))?,
            GraphSpec::Infeasible { c, n_levels } => {
                return Ok(legacy::build_infeasibility_dag(c, n_levels)?)
            }
        },
    };
    Ok(graph.levelize()?)
}

/// Resolves an instance: graph, schedule window, and the premise check.
pub fn resolve_setup(config: &TrialConfig) -> Result<ResolvedSetup, HarnessError> {
    if !(0.0..1.0).contains(&config.beta) {
        return Err(HarnessError::ConfigInvalid(format!(
            "beta = {} not in [0, 1)",
            config.beta
        )));
    }
    let graph = resolve_graph(&config.graph, config.seed)?;
    let degree_bound = graph.degree_bound().max(1);
    let (delta, gamma, premises_hold) = match config.params {
        ParamSource::Explicit { delta, gamma } => {
            if delta < 1 || gamma < 1 {
                return Err(HarnessError::ConfigInvalid(
                    "delta and gamma must be positive".into(),
                ));
            }
            (delta, gamma, None)
        }
        ParamSource::Auto {
            alpha,
            hp_exponent,
            profile,
        } => {
            if config.beta == 0.0 {
                return Err(HarnessError::ConfigInvalid(
                    "automatic parameters need beta > 0".into(),
                ));
            }
            let (delta, gamma) = compute_params(
                graph.len(),
                degree_bound,
                config.beta,
                alpha,
                hp_exponent,
                profile,
            )?;
            let premises = failure_probability_bound(
                graph.len() as u64,
                degree_bound as u64,
                config.beta,
                delta,
                gamma,
                alpha,
            )?
            .premises_hold;
            (delta, gamma, Some(premises))
        }
    };
    Ok(ResolvedSetup {
        graph,
        delta,
        gamma,
        degree_bound,
        premises_hold,
    })
}

fn main_protocol_row(
    graph: &LeveledTaskGraph,
    wg: &WorkerGraph,
    config: &TrialConfig,
    trial: u64,
) -> Result<TrialRow, HarnessError> {
    let trial_seed = derive_seed(config.seed, trial);
    let assignment = Assignment::sample(wg, config.beta, trial_seed)?;
    let strategy = config.adversary.strategy(trial_seed);
    let trace = protocol::simulate(graph, wg, &assignment, strategy)?;
    let honest = assignment
        .labels()
        .iter()
        .filter(|&&l| l == Label::Honest)
        .count() as u64;
    Ok(TrialRow {
        schema_version: 1,
        protocol: config.protocol.label().to_string(),
        trial,
        seed: trial_seed,
        success: trace.success,
        rounds: trace.metrics.rounds as u64,
        tasks: graph.len() as u64,
        honest_nodes: honest,
        malicious_nodes: assignment.len() as u64 - honest,
        honest_executions: trace.metrics.total_honest_executions,
        verifications: trace.metrics.total_verifications,
        assignments: trace.metrics.supervisor_assignments,
        introductions: trace.metrics.supervisor_introductions,
        source_sends: trace.metrics.source_sends,
        target_receives: trace.metrics.target_receives,
    })
}

/// Runs `config.trials` independent trials and aggregates them. Trials run
/// concurrently; results are ordered by trial index either way.
pub fn run_trials(config: &TrialConfig) -> Result<TrialReport, HarnessError> {
    let setup = resolve_setup(config)?;
    let graph = &setup.graph;

    if config.protocol == Protocol::LegacyPath {
        let is_path = graph
            .tasks()
            .all(|v| graph.preds(v).len() <= 1 && graph.sucs(v).len() <= 1)
            && graph.initial_tasks().len() == 1;
        if !is_path {
            return Err(HarnessError::ConfigInvalid(
                "the sequential path protocol needs a path graph".into(),
            ));
        }
    }

    let rows: Result<Vec<TrialRow>, HarnessError> = match config.protocol {
        Protocol::Main => {
            let wg = WorkerGraph::build(graph, ScheduleWindow::new(setup.delta, setup.gamma));
            (0..config.trials)
                .into_par_iter()
                .map(|trial| main_protocol_row(graph, &wg, config, trial))
                .collect()
        }
        Protocol::LegacyPath => (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let trial_seed = derive_seed(config.seed, trial);
                let run = legacy::simulate_path_protocol(
                    graph.len(),
                    config.beta,
                    config.adversary.strategy(trial_seed),
                    trial_seed,
                    config.round_cap,
                );
                Ok(TrialRow {
                    schema_version: 1,
                    protocol: config.protocol.label().to_string(),
                    trial,
                    seed: trial_seed,
                    success: run.terminated,
                    rounds: run.rounds,
                    tasks: graph.len() as u64,
                    honest_nodes: run.honest_assignments,
                    malicious_nodes: run.malicious_assignments,
                    honest_executions: run.honest_assignments,
                    verifications: 0,
                    assignments: run.honest_assignments + run.malicious_assignments,
                    introductions: 0,
                    source_sends: run.source_sends,
                    target_receives: run.target_receives,
                })
            })
            .collect(),
        Protocol::LegacyDag => (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let trial_seed = derive_seed(config.seed, trial);
                let run = legacy::simulate_legacy_dag_protocol(
                    graph,
                    config.beta,
                    config.adversary.strategy(trial_seed),
                    trial_seed,
                    config.round_cap,
                );
                Ok(TrialRow {
                    schema_version: 1,
                    protocol: config.protocol.label().to_string(),
                    trial,
                    seed: trial_seed,
                    success: run.terminated,
                    rounds: run.rounds,
                    tasks: graph.len() as u64,
                    honest_nodes: 0,
                    malicious_nodes: 0,
                    honest_executions: 0,
                    verifications: 0,
                    assignments: run.assignments,
                    introductions: 0,
                    source_sends: 0,
                    target_receives: 0,
                })
            })
            .collect(),
    };
    let rows = rows?;
    let aggregates = (!rows.is_empty()).then(|| aggregates_from_rows(&rows));
    Ok(TrialReport {
        setup,
        rows,
        aggregates,
    })
}

/// Writes `raw.csv` (and `aggregate.json` unless the report is empty) into
/// `dir`.
pub fn write_report(dir: &Path, report: &TrialReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut writer = csv::Writer::from_path(dir.join("raw.csv"))?;
    if report.rows.is_empty() {
        // Header only: serde-derived headers need one record, so write the
        // header fields explicitly.
        writer.write_record([
            "schema_version",
            "protocol",
            "trial",
            "seed",
            "success",
            "rounds",
            "tasks",
            "honest_nodes",
            "malicious_nodes",
            "honest_executions",
            "verifications",
            "assignments",
            "introductions",
            "source_sends",
            "target_receives",
        ])?;
    }
    for row in &report.rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    if let Some(aggregates) = &report.aggregates {
        let mut file = std::fs::File::create(dir.join("aggregate.json"))?;
        serde_json::to_writer_pretty(&mut file, aggregates)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads rows back from a `raw.csv`.
pub fn read_rows(path: &Path) -> Result<Vec<TrialRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Beta,
    Delta,
    Gamma,
    N,
}

/// One sweep point: the axis value and its report.
#[derive(Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub report: TrialReport,
}

/// Runs one report per axis value. Each point gets its own seed stream split
/// off the master seed.
pub fn sweep(
    config: &TrialConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<SweepPoint>, HarnessError> {
    let mut points = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let mut point = config.clone();
        point.seed = derive_seed(config.seed, SWEEP_STREAM ^ i as u64);
        apply_axis(&mut point, axis, value)?;
        points.push(SweepPoint {
            value,
            report: run_trials(&point)?,
        });
    }
    Ok(points)
}

fn apply_axis(config: &mut TrialConfig, axis: SweepAxis, value: f64) -> Result<(), HarnessError> {
    let as_positive_int = |value: f64, what: &str| -> Result<u64, HarnessError> {
        if value.fract() != 0.0 || value < 1.0 {
            return Err(HarnessError::ConfigInvalid(format!(
                "{what} axis needs positive integers, got {value}"
            )));
        }
        Ok(value as u64)
    };
    match axis {
        SweepAxis::Beta => config.beta = value,
        SweepAxis::Delta => {
            let delta = as_positive_int(value, "delta")? as u32;
            let gamma = match config.params {
                ParamSource::Explicit { gamma, .. } => gamma,
                ParamSource::Auto { .. } => {
                    return Err(HarnessError::ConfigInvalid(
                        "sweeping delta needs explicit base parameters".into(),
                    ))
                }
            };
            config.params = ParamSource::Explicit { delta, gamma };
        }
        SweepAxis::Gamma => {
            let gamma = as_positive_int(value, "gamma")? as u32;
            let delta = match config.params {
                ParamSource::Explicit { delta, .. } => delta,
                ParamSource::Auto { .. } => {
                    return Err(HarnessError::ConfigInvalid(
                        "sweeping gamma needs explicit base parameters".into(),
                    ))
                }
            };
            config.params = ParamSource::Explicit { delta, gamma };
        }
        SweepAxis::N => {
            let n = as_positive_int(value, "n")? as usize;
            let spec = match &config.graph {
                GraphSource::Spec(spec) => *spec,
                GraphSource::File(_) => {
                    return Err(HarnessError::ConfigInvalid(
                        "sweeping n needs a generated graph, not a file".into(),
                    ))
                }
            };
            let new = match spec {
                GraphSpec::Path { .. } => GraphSpec::Path { n },
                GraphSpec::Random {
                    max_width,
                    degree_cap,
                    ..
                } => GraphSpec::Random {
                    n,
                    max_width,
                    degree_cap,
                },
                GraphSpec::Infeasible { c, .. } => GraphSpec::Infeasible { c, n_levels: n },
                GraphSpec::Diamond => {
                    return Err(HarnessError::ConfigInvalid(
                        "the diamond graph has a fixed size".into(),
                    ))
                }
            };
            config.graph = GraphSource::Spec(new);
        }
    }
    Ok(())
}
