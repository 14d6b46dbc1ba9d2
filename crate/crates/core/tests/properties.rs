//! Property suites: leveling invariants, window arithmetic, witness
//! machinery on random instances, adversary dominance, and determinism.

mod common;

use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_dag, random_instance, sample_failing};
use supsim::protocol::{
    classify_by_reachability, is_dominated_success, simulate, AdversaryStrategy, Assignment, Label,
    NodeStatus,
};
use supsim::witness::{
    check_bound, construct_witness_dag, construct_witness_path, for_each_witness_sequence,
    is_valid_wrt, is_witness_sequence, SizeCaps,
};
use supsim::worker_graph::{ScheduleWindow, WindowRelation, WorkerGraph, WorkerNode};

/// (tasks, edges, gamma) of a tiny instance.
type Shape = (
    &'static [&'static str],
    &'static [(&'static str, &'static str)],
    u32,
);

#[test]
fn levelize_preserves_depth_and_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e7e1);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=50);
        let edge_prob = rng.gen_range(0.05..0.3);
        let g = random_dag(&mut rng, n, edge_prob);
        let leveled = g.levelize().unwrap();
        assert_eq!(leveled.depth_of_graph(), g.depth_of_graph());
        for &(u, v) in leveled.edges() {
            assert_eq!(leveled.depth(v), leveled.depth(u) + 1);
        }
        let again = leveled.levelize().unwrap();
        assert_eq!(again.relay_count(), 0, "leveling is a fixed point");
        assert_eq!(again.len(), leveled.len());

        // Contracting relay chains recovers the original edge set: an edge
        // touching a relay stands for that relay's original edge, any other
        // edge for itself.
        let mut recovered: BTreeSet<(String, String)> = BTreeSet::new();
        for &(u, v) in leveled.edges() {
            let origin = |x| {
                leveled
                    .relay_provenance()
                    .get(&x)
                    .map(|&(a, b, _)| (g.name(a).to_string(), g.name(b).to_string()))
            };
            let edge = match (origin(u), origin(v)) {
                (Some(e1), Some(e2)) => {
                    assert_eq!(e1, e2, "relay chains never mix edges");
                    e1
                }
                (Some(e), None) | (None, Some(e)) => e,
                (None, None) => (leveled.name(u).to_string(), leveled.name(v).to_string()),
            };
            recovered.insert(edge);
        }
        let original: BTreeSet<(String, String)> = g
            .edges()
            .iter()
            .map(|&(u, v)| (g.name(u).to_string(), g.name(v).to_string()))
            .collect();
        assert_eq!(recovered, original);
    }
}

#[test]
fn window_arithmetic_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x77177);
    for _ in 0..1000 {
        let delta = rng.gen_range(1..=4);
        let gamma = rng.gen_range(1..=10);
        let depth = rng.gen_range(2..=5);
        let graph = supsim::gen::path(depth).unwrap().levelize().unwrap();
        let wg = WorkerGraph::build(&graph, ScheduleWindow::new(delta, gamma));
        let v = graph.id(&format!("v{}", depth - 1)).unwrap();
        let u = graph.preds(v)[0];
        for k in 0..gamma {
            let node = WorkerNode {
                task: v,
                round: wg.t_min(v) + k,
            };
            let preds = wg.in_window_predecessors(node, WindowRelation::PrecedingTask);
            // The window at the predecessor task spans
            // min(2 delta, delta + k, gamma, gamma + delta - k) rounds: the
            // first delta workers see a window clipped at the predecessor's
            // first slot, the last delta workers one clipped at its last.
            let expect = (2 * delta).min(delta + k).min(gamma).min(gamma + delta - k);
            assert_eq!(
                preds.len() as u32,
                expect,
                "delta={delta} gamma={gamma} k={k}"
            );
            if k < delta && gamma >= 2 * delta {
                assert!(
                    (preds.len() as u32) < 2 * delta,
                    "early workers see clipped windows"
                );
            }
            // Newest-first ordering, strictly before the node's round.
            for pair in preds.windows(2) {
                assert!(pair[0].round > pair[1].round);
            }
            assert!(preds.iter().all(|p| p.round < node.round && p.task == u));
        }
    }
}

#[test]
fn constructed_witnesses_are_valid_on_random_failing_dags() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x517);
    let mut corpus = 0;
    while corpus < 250 {
        let (_, wg) = random_instance(&mut rng, 20, 10, 3);
        let beta = [0.5, 0.8][rng.gen_range(0..2)];
        let Some((assignment, statuses)) = sample_failing(&wg, beta, &mut rng, 40) else {
            continue;
        };
        corpus += 1;
        let ws = construct_witness_dag(&wg, &statuses).expect("construction succeeds");
        assert!(is_witness_sequence(&ws, &wg).unwrap().is_none());
        assert!(is_valid_wrt(&ws, &wg, &assignment, &statuses));
        assert!(check_bound(&ws, &wg));

        // Post-hoc disjointness, independent of the checker.
        let mut seen = HashSet::new();
        for node in ws.malicious_nodes() {
            assert!(seen.insert(node), "runs overlap");
        }

        // Pivot rounds never decrease along the sequence.
        let rounds: Vec<u32> = ws.pivots().map(|w| w.round).collect();
        assert!(rounds.windows(2).all(|p| p[0] <= p[1]));

        // Every failed pivot carries an M' of at least
        // min(2 delta, t_max(v) - t + delta + 1) workers.
        let upward: HashSet<usize> = ws.upward_pivot_indices().into_iter().collect();
        for (i, triple) in ws.triples.iter().enumerate() {
            if let (true, Some(pivot), Some(mp)) =
                (upward.contains(&i), triple.pivot, triple.m_prime)
            {
                let need = (2 * wg.delta()).min(wg.t_max(pivot.task) - pivot.round + wg.delta() + 1)
                    as usize;
                assert!(mp.len() >= need, "M' too small: {} < {need}", mp.len());
            }
        }
    }
}

#[test]
fn constructed_witnesses_are_valid_on_random_failing_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb0b);
    let mut corpus = 0;
    while corpus < 150 {
        let n = rng.gen_range(1..=8);
        let graph = supsim::gen::path(n).unwrap().levelize().unwrap();
        let window = ScheduleWindow::new(rng.gen_range(1..=3), rng.gen_range(1..=8));
        let wg = WorkerGraph::build(&graph, window);
        let Some((assignment, statuses)) = sample_failing(&wg, 0.6, &mut rng, 40) else {
            continue;
        };
        corpus += 1;
        let ws = construct_witness_path(&graph, &wg, &statuses).expect("construction succeeds");
        assert!(is_witness_sequence(&ws, &wg).unwrap().is_none());
        assert!(is_valid_wrt(&ws, &wg, &assignment, &statuses));
        assert!(check_bound(&ws, &wg));
    }
}

#[test]
fn enumerated_sequences_all_pass_the_checker() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xe2e);
    for _ in 0..30 {
        let (_, wg) = random_instance(&mut rng, 3, 4, 2);
        if wg.node_count() > 12 {
            continue;
        }
        let mut total = 0u64;
        for_each_witness_sequence(&wg, SizeCaps::unbounded(&wg), |ws| {
            total += 1;
            assert!(
                is_witness_sequence(ws, &wg).unwrap().is_none(),
                "enumerator emitted a sequence the checker rejects: {ws:?}"
            );
        })
        .unwrap();
        assert!(
            total >= 1,
            "every instance has at least the whole-task sequences"
        );
    }
}

#[test]
fn never_correct_is_dominant_over_probabilistic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd01);
    for trial in 0..500 {
        let (graph, wg) = random_instance(&mut rng, 12, 8, 3);
        let beta = rng.gen_range(0.1..0.9);
        let assignment = Assignment::sample(&wg, beta, rng.gen()).unwrap();
        let nc = simulate(&graph, &wg, &assignment, AdversaryStrategy::NeverCorrect).unwrap();
        let other = simulate(
            &graph,
            &wg,
            &assignment,
            AdversaryStrategy::ProbabilisticCorrect {
                p: 0.5,
                seed: rng.gen(),
            },
        )
        .unwrap();
        assert!(
            is_dominated_success(&nc, &other).unwrap(),
            "dominance violated at trial {trial}"
        );
    }
}

#[test]
fn honest_nodes_execute_at_most_once_and_within_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc);
    for _ in 0..200 {
        let (graph, wg) = random_instance(&mut rng, 15, 8, 3);
        let beta = rng.gen_range(0.0..0.9);
        let assignment = Assignment::sample(&wg, beta, rng.gen()).unwrap();
        let trace = simulate(&graph, &wg, &assignment, AdversaryStrategy::NeverCorrect).unwrap();
        assert_eq!(
            trace.metrics.rounds,
            wg.gamma() + (graph.depth_of_graph() - 1) * wg.delta()
        );
        for node in wg.nodes() {
            let idx = wg.node_index(node);
            let cap = 2 * wg.delta() * (1 + wg.preds(node.task).len() as u32);
            assert!(trace.verifications[idx] <= cap);
            assert!(trace.messages_received[idx] <= cap);
            if trace.labels[idx] == Label::Malicious {
                assert!(!trace.executed[idx]);
                assert_eq!(trace.status[idx], NodeStatus::Malicious);
            }
        }
        // Statuses agree with the independent classifier under the dominant
        // adversary.
        assert_eq!(trace.status, classify_by_reachability(&wg, &assignment));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Sent and received message totals balance for any strategy mix.
    #[test]
    fn message_totals_balance(seed in any::<u64>(), beta in 0.0f64..0.95, p in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (graph, wg) = random_instance(&mut rng, 10, 6, 3);
        let assignment = Assignment::sample(&wg, beta, rng.gen()).unwrap();
        for strategy in [
            AdversaryStrategy::ProbabilisticCorrect { p, seed: rng.gen() },
            AdversaryStrategy::NeverCorrect,
            AdversaryStrategy::AlwaysCorrect,
        ] {
            let trace = simulate(&graph, &wg, &assignment, strategy).unwrap();
            let sent: u64 = trace.messages_sent.iter().map(|&v| v as u64).sum();
            let received: u64 = trace.messages_received.iter().map(|&v| v as u64).sum();
            prop_assert_eq!(sent, received);
        }
    }

    /// The simulation is a pure function of its inputs.
    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), beta in 0.0f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (graph, wg) = random_instance(&mut rng, 10, 6, 3);
        let assignment = Assignment::sample(&wg, beta, 7).unwrap();
        let strategy = AdversaryStrategy::ProbabilisticCorrect { p: 0.4, seed: 11 };
        let a = simulate(&graph, &wg, &assignment, strategy).unwrap();
        let b = simulate(&graph, &wg, &assignment, strategy).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// On a multi-predecessor DAG, a structurally valid witness sequence can
/// coexist with a successful execution: the upward move of a failed pivot
/// may name a predecessor that in fact delivered, while the real blocker was
/// a different predecessor the sequence never visits. The certificate
/// direction is one-way: failure guarantees a valid witness, but a valid
/// witness does not force failure. On path graphs the single predecessor
/// closes that loophole (see the acceptance suite).
#[test]
fn valid_witness_can_coexist_with_success_on_multi_predecessor_dags() {
    use supsim::task_graph::TaskGraph;
    use supsim::witness::{Run, WitnessSequence, WitnessTriple};

    let g = TaskGraph::build(
        &["a", "b", "c", "d"],
        &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")],
    )
    .unwrap()
    .levelize()
    .unwrap();
    let wg = WorkerGraph::build(&g, ScheduleWindow::new(1, 7));
    let id = |name: &str| g.id(name).unwrap();
    let (a, b, c, d) = (id("a"), id("b"), id("c"), id("d"));
    let mut labels = vec![Label::Honest; wg.node_count()];
    let mut set = |task, rounds: &[u32]| {
        for &round in rounds {
            labels[wg.node_index(WorkerNode { task, round })] = Label::Malicious;
        }
    };
    set(a, &[1, 2, 3, 4]);
    set(b, &[2, 3, 4, 5, 6, 7]); // only (b, 8) is honest
    set(c, &[2, 3, 4, 5, 8]);
    set(d, &[3, 4, 5, 6, 7]);
    let assignment = Assignment::from_labels(labels);
    let statuses = classify_by_reachability(&wg, &assignment);

    // The execution succeeds: (d, 9) collects (b, 8) and (c, 7..8 window).
    assert!(!supsim::protocol::assignment_fails(&wg, &statuses));
    assert_eq!(
        statuses[wg.node_index(WorkerNode { task: d, round: 9 })],
        NodeStatus::Successful
    );

    // Yet this witness is structurally sound and valid for the assignment:
    // (d, 8) really failed (task b starved its window), and the sequence
    // climbs back up through task c, which was alive the whole time.
    let ws = WitnessSequence {
        triples: vec![
            WitnessTriple {
                m: Some(Run::new(a, 1, 4)),
                m_prime: None,
                pivot: Some(WorkerNode { task: a, round: 5 }),
            },
            WitnessTriple {
                m: None,
                m_prime: None,
                pivot: Some(WorkerNode { task: c, round: 6 }),
            },
            WitnessTriple {
                m: Some(Run::new(d, 7, 7)),
                m_prime: Some(Run::new(c, 4, 5)),
                pivot: Some(WorkerNode { task: d, round: 8 }),
            },
            WitnessTriple {
                m: Some(Run::new(c, 8, 8)),
                m_prime: None,
                pivot: None,
            },
        ],
    };
    assert!(is_witness_sequence(&ws, &wg).unwrap().is_none());
    assert!(is_valid_wrt(&ws, &wg, &assignment, &statuses));
}

/// Independent confirmation of witness existence on failing DAG executions:
/// exhaustive enumeration (not the constructive procedure) finds at least
/// one valid sequence for every failing assignment on tiny instances.
#[test]
fn enumeration_confirms_witness_existence_on_failing_dags() {
    use supsim::task_graph::TaskGraph;

    let mut rng = ChaCha8Rng::seed_from_u64(0xdab);
    let shapes: &[Shape] = &[
        (
            &["a", "b", "c", "d"],
            &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")],
            4,
        ),
        (&["a", "b", "c"], &[("a", "c"), ("b", "c")], 5),
    ];
    for &(tasks, edges, gamma) in shapes {
        let graph = TaskGraph::build(tasks, edges).unwrap().levelize().unwrap();
        let wg = WorkerGraph::build(&graph, ScheduleWindow::new(1, gamma));
        let mut sequences = Vec::new();
        for_each_witness_sequence(&wg, SizeCaps::unbounded(&wg), |ws| {
            sequences.push(ws.clone())
        })
        .unwrap();
        for _ in 0..30 {
            let Some((assignment, statuses)) = sample_failing(&wg, 0.6, &mut rng, 50) else {
                continue;
            };
            let found = sequences
                .iter()
                .any(|ws| is_valid_wrt(ws, &wg, &assignment, &statuses));
            assert!(
                found,
                "failing assignment admitted no valid witness among the enumeration"
            );
        }
    }
}

#[test]
fn sweep_over_beta_with_solved_parameters_stays_safe() {
    use supsim::harness::{
        sweep, AdversarySpec, GraphSource, GraphSpec, ParamSource, Protocol, SweepAxis, TrialConfig,
    };
    use supsim::params::ConstantProfile;

    let config = TrialConfig {
        graph: GraphSource::Spec(GraphSpec::Random {
            n: 30,
            max_width: 4,
            degree_cap: 3,
        }),
        beta: 0.5,
        params: ParamSource::Auto {
            alpha: 0.5,
            hp_exponent: 1.0,
            profile: ConstantProfile::Lemma,
        },
        adversary: AdversarySpec::Never,
        protocol: Protocol::Main,
        trials: 25,
        seed: 0x22,
        round_cap: 1 << 32,
    };
    let values: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    for point in sweep(&config, SweepAxis::Beta, &values).unwrap() {
        let rate = point.report.aggregates.unwrap().success_rate.mean;
        assert!(
            rate >= 0.95,
            "beta {} with solved parameters: success rate {rate}",
            point.value
        );
        assert_eq!(point.report.setup.premises_hold, Some(true));
    }
}

#[test]
fn success_rate_grows_with_delta_below_the_safe_regime() {
    use supsim::harness::{
        sweep, AdversarySpec, GraphSource, GraphSpec, ParamSource, Protocol, SweepAxis, TrialConfig,
    };

    // gamma held fixed while delta crosses the threshold where a lookback
    // window of 2*delta malicious workers stops being likely.
    let config = TrialConfig {
        graph: GraphSource::Spec(GraphSpec::Path { n: 15 }),
        beta: 0.6,
        params: ParamSource::Explicit {
            delta: 1,
            gamma: 25,
        },
        adversary: AdversarySpec::Never,
        protocol: Protocol::Main,
        trials: 60,
        seed: 0x10,
        round_cap: 1 << 32,
    };
    let rates: Vec<f64> = sweep(&config, SweepAxis::Delta, &[1.0, 2.0, 4.0, 8.0])
        .unwrap()
        .into_iter()
        .map(|p| p.report.aggregates.unwrap().success_rate.mean)
        .collect();
    assert!(
        rates.windows(2).all(|w| w[1] >= w[0]),
        "success rate must not drop as delta grows: {rates:?}"
    );
    assert!(
        rates[0] < 0.6,
        "delta 1 is deliberately under-provisioned: {rates:?}"
    );
    assert!(rates[3] >= 0.95, "delta 8 is comfortably safe: {rates:?}");
}

/// The structural checker never panics and stays deterministic on arbitrary
/// perturbations of real witnesses; a perturbed sequence that still checks
/// and validates must simply be another valid witness, never an artifact.
#[test]
fn checker_is_total_under_mutation() {
    use supsim::witness::{Run, WitnessSequence};

    let mut rng = ChaCha8Rng::seed_from_u64(0xf022);
    let mut mutated = 0;
    while mutated < 400 {
        let (_, wg) = random_instance(&mut rng, 10, 6, 3);
        let Some((_, statuses)) = sample_failing(&wg, 0.6, &mut rng, 20) else {
            continue;
        };
        let ws = construct_witness_dag(&wg, &statuses).unwrap();
        let mut twisted: WitnessSequence = ws.clone();
        let i = rng.gen_range(0..twisted.triples.len());
        let triple = &mut twisted.triples[i];
        match rng.gen_range(0..4) {
            0 => triple.m = None,
            1 => {
                if let Some(run) = triple.m {
                    triple.m = Run::maybe(run.task, run.start, run.end.saturating_sub(1));
                }
            }
            2 => triple.m_prime = triple.m,
            _ => {
                if let Some(p) = &mut triple.pivot {
                    p.round = p.round.saturating_sub(1).max(wg.t_min(p.task));
                }
            }
        }
        if twisted == ws {
            continue;
        }
        mutated += 1;
        let first = is_witness_sequence(&twisted, &wg);
        let second = is_witness_sequence(&twisted, &wg);
        match (&first, &second) {
            (Ok(a), Ok(b)) => assert_eq!(a.is_none(), b.is_none()),
            (Err(_), Err(_)) => {}
            _ => panic!("verdict changed between identical calls"),
        }
    }
}
