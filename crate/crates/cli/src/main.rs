//! Command-line driver: generate task graphs, run seeded trial batches,
//! sweep a parameter axis, check or construct witness sequences from traces,
//! and evaluate the analytic failure bound.
//!
//! Exit codes: 0 on success, 1 when a checked witness is rejected, 2 on
//! configuration errors, 3 when `--strict` turns a premise warning into an
//! error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use supsim::harness::{
    self, AdversarySpec, GraphSource, ParamSource, Protocol, SweepAxis, TrialConfig,
};
use supsim::params::ConstantProfile;
use supsim::protocol::{
    classify_by_reachability, read_trace_jsonl, simulate, write_trace_jsonl, Assignment, TraceMeta,
};
use supsim::witness::{
    construct_witness_dag, failure_probability_bound, is_valid_wrt, is_witness_sequence,
    witness_from_file, witness_to_file, WitnessFile,
};
use supsim::worker_graph::{ScheduleWindow, WorkerGraph};

#[derive(Parser)]
#[command(
    name = "supsim",
    version,
    about = "Supervised distributed computing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a task graph file.
    Gen(GenArgs),
    /// Run a batch of seeded trials and write raw + aggregate results.
    Run(RunArgs),
    /// Run one trial batch per value of a swept axis.
    Sweep(SweepArgs),
    /// Check a witness sequence against a trace, or construct one from it.
    Witness(WitnessArgs),
    /// Evaluate the analytic failure-probability bound.
    Bound(BoundArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GraphKind {
    Path,
    Diamond,
    Random,
    Infeasible,
}

#[derive(Args)]
struct GenArgs {
    /// Graph family.
    #[arg(long = "type", value_enum)]
    kind: GraphKind,
    /// Tasks for path/random; levels for the infeasible family.
    #[arg(long)]
    n: Option<usize>,
    /// Degree cap for the random family.
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Block size for the infeasible family.
    #[arg(long)]
    c: Option<usize>,
    /// Maximum tasks per level for the random family.
    #[arg(long, default_value_t = 4)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Task graph file (see `gen`).
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    beta: f64,
    /// Explicit round offset between levels.
    #[arg(long, conflicts_with = "auto")]
    delta: Option<u32>,
    /// Explicit workers per task.
    #[arg(long, conflicts_with = "auto")]
    gamma: Option<u32>,
    /// Solve delta and gamma from alpha and the failure exponent.
    #[arg(long)]
    auto: bool,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Failure exponent c: the failure probability target is n^-c.
    #[arg(long = "hp-exp", default_value_t = 1.0)]
    hp_exp: f64,
    /// Constant profile for the solved delta bound.
    #[arg(long, value_enum, default_value_t = ProfileArg::Strict)]
    profile: ProfileArg,
    /// Adversary behavior: never, always, or `prob:<p>`.
    #[arg(long, default_value = "never")]
    adversary: String,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Main)]
    protocol: ProtocolArg,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Round budget for the legacy protocols.
    #[arg(long = "round-cap", default_value_t = 1_000_000)]
    round_cap: u64,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    /// Treat a violated analytic premise as an error (exit 3).
    #[arg(long)]
    strict: bool,
    /// Also write the JSONL trace of trial 0 here.
    #[arg(long = "trace-out")]
    trace_out: Option<PathBuf>,
    /// Also write the worker graph as JSON here (large).
    #[arg(long = "export-worker-graph")]
    export_worker_graph: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProfileArg {
    Lemma,
    Theorem,
    Strict,
}

impl From<ProfileArg> for ConstantProfile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Lemma => ConstantProfile::Lemma,
            ProfileArg::Theorem => ConstantProfile::Theorem,
            ProfileArg::Strict => ConstantProfile::Strict,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    Main,
    LegacyPath,
    LegacyDag,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Main => Protocol::Main,
            ProtocolArg::LegacyPath => Protocol::LegacyPath,
            ProtocolArg::LegacyDag => Protocol::LegacyDag,
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AxisArg {
    Beta,
    Delta,
    Gamma,
    N,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Beta => SweepAxis::Beta,
            AxisArg::Delta => SweepAxis::Delta,
            AxisArg::Gamma => SweepAxis::Gamma,
            AxisArg::N => SweepAxis::N,
        }
    }
}

#[derive(Args)]
struct WitnessArgs {
    /// Trace file written by `run --trace-out`.
    #[arg(long)]
    trace: PathBuf,
    /// Witness file to check against the trace.
    #[arg(long, conflicts_with = "construct")]
    check: Option<PathBuf>,
    /// Construct a witness from the (failed) trace.
    #[arg(long)]
    construct: bool,
    /// Output file for `--construct`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    d: u64,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    delta: u32,
    #[arg(long)]
    gamma: u32,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Treat a violated premise as an error (exit 3).
    #[arg(long)]
    strict: bool,
}

fn parse_adversary(text: &str) -> Result<AdversarySpec> {
    match text {
        "never" => Ok(AdversarySpec::Never),
        "always" => Ok(AdversarySpec::Always),
        other => {
            if let Some(p) = other.strip_prefix("prob:") {
                let p: f64 = p
                    .parse()
                    .context("adversary probability must be a number")?;
                if !(0.0..=1.0).contains(&p) {
                    bail!("adversary probability {p} not in [0, 1]");
                }
                Ok(AdversarySpec::Prob(p))
            } else {
                bail!("unknown adversary {other:?}; use never, always, or prob:<p>")
            }
        }
    }
}

fn build_config(args: &RunArgs) -> Result<TrialConfig> {
    let params = if args.auto {
        ParamSource::Auto {
            alpha: args.alpha,
            hp_exponent: args.hp_exp,
            profile: args.profile.into(),
        }
    } else {
        match (args.delta, args.gamma) {
            (Some(delta), Some(gamma)) => ParamSource::Explicit { delta, gamma },
            _ => bail!("give both --delta and --gamma, or pass --auto"),
        }
    };
    Ok(TrialConfig {
        graph: GraphSource::File(args.graph.clone()),
        beta: args.beta,
        params,
        adversary: parse_adversary(&args.adversary)?,
        protocol: args.protocol.into(),
        trials: args.trials,
        seed: args.seed,
        round_cap: args.round_cap,
    })
}

fn cmd_gen(args: &GenArgs) -> Result<ExitCode> {
    let need_n = |what: &str| {
        args.n
            .with_context(|| format!("--n is required for the {what} family"))
    };
    let graph = match args.kind {
        GraphKind::Path => supsim::gen::path(need_n("path")?)?,
        GraphKind::Diamond => supsim::gen::diamond()?,
        GraphKind::Random => {
            supsim::gen::random_leveled(need_n("random")?, args.width, args.d, args.seed)?
        }
        GraphKind::Infeasible => {
            let c = args
                .c
                .context("--c is required for the infeasible family")?;
            let levels = need_n("infeasible")?;
            let leveled = supsim::legacy::build_infeasibility_dag(c, levels)?;
            leveled.store(&args.out)?;
            println!(
                "wrote {} ({} tasks, {} edges, degree {})",
                args.out.display(),
                leveled.len(),
                leveled.edges().len(),
                leveled.degree_bound()
            );
            return Ok(ExitCode::SUCCESS);
        }
    };
    graph.store(&args.out)?;
    println!(
        "wrote {} ({} tasks, {} edges, depth {})",
        args.out.display(),
        graph.len(),
        graph.edges().len(),
        graph.depth_of_graph()
    );
    Ok(ExitCode::SUCCESS)
}

fn premise_exit(premises_hold: Option<bool>, strict: bool) -> Option<ExitCode> {
    if premises_hold == Some(false) {
        eprintln!(
            "warning: the analytic bound's side condition fails for these parameters; \
             the failure-probability guarantee does not apply"
        );
        if strict {
            return Some(ExitCode::from(3));
        }
    }
    None
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let config = build_config(args)?;
    let report = harness::run_trials(&config)?;
    harness::write_report(&args.out_dir, &report)?;

    if let Some(path) = &args.export_worker_graph {
        let wg = WorkerGraph::build(
            &report.setup.graph,
            ScheduleWindow::new(report.setup.delta, report.setup.gamma),
        );
        let mut file = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut file, &wg.export_json())?;
        file.write_all(b"\n")?;
    }
    if let Some(path) = &args.trace_out {
        if config.protocol != Protocol::Main {
            bail!("--trace-out applies to the main protocol only");
        }
        let wg = WorkerGraph::build(
            &report.setup.graph,
            ScheduleWindow::new(report.setup.delta, report.setup.gamma),
        );
        let trial_seed = supsim::derive_seed(config.seed, 0);
        let assignment = Assignment::sample(&wg, config.beta, trial_seed)?;
        let trace = simulate(
            &report.setup.graph,
            &wg,
            &assignment,
            config.adversary.strategy(trial_seed),
        )?;
        let meta = TraceMeta {
            beta: config.beta,
            seed: trial_seed,
            adversary: config.adversary.label(),
        };
        let mut file = BufWriter::new(File::create(path)?);
        write_trace_jsonl(&mut file, &report.setup.graph, &wg, &trace, &meta)?;
    }

    if let Some(agg) = &report.aggregates {
        println!(
            "{} trials: success rate {:.3} [{:.3}, {:.3}], mean rounds {:.1}, \
             mean executions/task {:.4} (delta={}, gamma={})",
            agg.trials,
            agg.success_rate.mean,
            agg.success_rate.lo,
            agg.success_rate.hi,
            agg.rounds.mean,
            agg.executions_per_task.mean,
            report.setup.delta,
            report.setup.gamma,
        );
    } else {
        println!("0 trials: wrote header-only raw.csv");
    }
    if let Some(code) = premise_exit(report.setup.premises_hold, args.strict) {
        return Ok(code);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let config = build_config(&args.run)?;
    let points = harness::sweep(&config, args.axis.into(), &args.values)?;
    std::fs::create_dir_all(&args.run.out_dir)?;
    let mut summary = Vec::new();
    let mut premise_violated = false;
    for (i, point) in points.iter().enumerate() {
        let dir = args
            .run
            .out_dir
            .join(format!("point_{i:02}_{}", point.value));
        harness::write_report(&dir, &point.report)?;
        premise_violated |= point.report.setup.premises_hold == Some(false);
        summary.push(serde_json::json!({
            "value": point.value,
            "delta": point.report.setup.delta,
            "gamma": point.report.setup.gamma,
            "aggregates": point.report.aggregates,
        }));
        if let Some(agg) = &point.report.aggregates {
            println!(
                "value {}: success rate {:.3}, mean rounds {:.1}",
                point.value, agg.success_rate.mean, agg.rounds.mean
            );
        }
    }
    let mut file = BufWriter::new(File::create(args.run.out_dir.join("sweep.json"))?);
    serde_json::to_writer_pretty(&mut file, &summary)?;
    file.write_all(b"\n")?;
    if let Some(code) = premise_exit(Some(!premise_violated), args.run.strict) {
        return Ok(code);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_witness(args: &WitnessArgs) -> Result<ExitCode> {
    let trace = read_trace_jsonl(BufReader::new(
        File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?,
    ))?;
    let statuses = classify_by_reachability(&trace.worker_graph, &trace.assignment);
    if statuses != trace.recorded_status {
        bail!("trace statuses do not match its labels; the file looks corrupted");
    }
    match (&args.check, args.construct) {
        (Some(path), false) => {
            let file: WitnessFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
            let ws = witness_from_file(&file, &trace.graph)?;
            match is_witness_sequence(&ws, &trace.worker_graph)? {
                Some(violation) => {
                    println!(
                        "invalid: clause {} — {}",
                        violation.clause.number(),
                        violation.detail
                    );
                    Ok(ExitCode::from(1))
                }
                None => {
                    if is_valid_wrt(&ws, &trace.worker_graph, &trace.assignment, &statuses) {
                        println!(
                            "valid witness sequence: {} pivots, {} malicious workers",
                            ws.pivot_count(),
                            ws.malicious_count()
                        );
                        Ok(ExitCode::SUCCESS)
                    } else {
                        println!("structurally sound but not valid for this trace's assignment");
                        Ok(ExitCode::from(1))
                    }
                }
            }
        }
        (None, true) => {
            let out = args.out.as_ref().context("--construct needs --out")?;
            let ws = construct_witness_dag(&trace.worker_graph, &statuses)?;
            let file = witness_to_file(&ws, &trace.graph);
            let mut handle = BufWriter::new(File::create(out)?);
            serde_json::to_writer_pretty(&mut handle, &file)?;
            handle.write_all(b"\n")?;
            println!(
                "wrote {} ({} pivots, {} malicious workers)",
                out.display(),
                ws.pivot_count(),
                ws.malicious_count()
            );
            Ok(ExitCode::SUCCESS)
        }
        _ => bail!("pass exactly one of --check <witness.json> or --construct"),
    }
}

fn cmd_bound(args: &BoundArgs) -> Result<ExitCode> {
    let fb = failure_probability_bound(
        args.n, args.d, args.beta, args.delta, args.gamma, args.alpha,
    )?;
    println!(
        "failure probability bound: {:.6e} (ln = {:.3})",
        fb.bound, fb.ln_bound
    );
    println!("premises hold: {}", fb.premises_hold);
    if let Some(code) = premise_exit(Some(fb.premises_hold), args.strict) {
        return Ok(code);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Witness(args) => cmd_witness(args),
        Command::Bound(args) => cmd_bound(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
