//! Command-line front end: `gen`, `simulate` and `evaluate`.
//!
//! Every command is deterministic given its arguments; the simulate bundle
//! carries a manifest with the full configuration and the input hash.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pcn_rebalance::evaluation::{self, empirical_cdf, CdfPoint, EvalError, EvaluationReport, PairSelection, PaymentProbe};
use pcn_rebalance::ingestion::{self, IngestError, SnapshotFormat, SyntheticParams};
use pcn_rebalance::rebalancer::{NoEvaluation, RebalanceError, SampleHook};
use pcn_rebalance::{AgreementMode, NetworkGraph, SimulationConfig, Strategy};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Input(#[from] IngestError),
    #[error("no rebalancing possible: {0}")]
    NoRebalancing(String),
    #[error(transparent)]
    Simulation(#[from] RebalanceError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Simulation(RebalanceError::InvariantViolation { .. }) => EXIT_INVARIANT,
            CliError::Simulation(RebalanceError::InvalidConfig(_)) => EXIT_USAGE,
            _ => EXIT_INPUT,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "pcn-sim", version, about = "Generate, rebalance and evaluate payment channel networks")]
pub struct Cli {
    /// Worker threads for path evaluation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic preferential-attachment snapshot.
    Gen(GenArgs),
    /// Allocate funds, extract the liquid core and run the rebalancing heuristic.
    Simulate(SimulateArgs),
    /// Measure routing quality of a network state.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 200)]
    pub nodes: usize,
    /// Edges added per new node.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub degree: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub cap_min: u64,
    #[arg(long, default_value_t = 10_000_000)]
    pub cap_max: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Cycle4,
    Cycle5,
    Foaf,
    Mpp,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Cycle4 => Strategy::Cycle4,
            StrategyArg::Cycle5 => Strategy::Cycle5,
            StrategyArg::Foaf => Strategy::Foaf,
            StrategyArg::Mpp => Strategy::Mpp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AgreementArg {
    Band,
    Gini,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Jsonl,
}

fn snapshot_format(arg: Option<FormatArg>, path: &Path) -> SnapshotFormat {
    match arg {
        Some(FormatArg::Csv) => SnapshotFormat::Csv,
        Some(FormatArg::Jsonl) => SnapshotFormat::Jsonl,
        None => SnapshotFormat::from_path(path),
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, value_enum, default_value = "foaf")]
    pub strategy: StrategyArg,
    /// Seed for fund allocation and the scheduler.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the balances in the input instead of a coin-flip allocation.
    #[arg(long)]
    pub keep_balances: bool,
    #[arg(long, default_value_t = 5000)]
    pub cycle_cap: usize,
    #[arg(long, value_enum, default_value = "band")]
    pub agreement: AgreementArg,
    #[arg(long)]
    pub no_sink_condition: bool,
    #[arg(long, default_value_t = 20)]
    pub mpp_divisor: u64,
    #[arg(long, default_value_t = 1)]
    pub min_amount: u64,
    #[arg(long, default_value_t = 10_000_000)]
    pub max_operations: u64,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = pcn_rebalance::cycles::DEFAULT_FOAF_MAX_HOPS)]
    pub foaf_max_hops: usize,
    /// Skip the per-operation invariant checks.
    #[arg(long)]
    pub no_verify: bool,
    /// Payment amount probed at every metrics sample.
    #[arg(long, default_value_t = 1)]
    pub amount: u64,
    /// Probe this many random pairs instead of all pairs.
    #[arg(long)]
    pub sample_pairs: Option<usize>,
    /// Record imbalance only, without routing probes.
    #[arg(long)]
    pub no_eval: bool,
    #[arg(short, long = "out-dir")]
    pub out_dir: PathBuf,
}

impl SimulateArgs {
    pub fn config(&self) -> SimulationConfig {
        SimulationConfig {
            seed: self.seed,
            strategy: self.strategy.into(),
            cycle_cap: self.cycle_cap,
            agreement_mode: match self.agreement {
                AgreementArg::Band => AgreementMode::Band,
                AgreementArg::Gini => AgreementMode::Gini,
            },
            require_sink_condition: !self.no_sink_condition,
            mpp_divisor: self.mpp_divisor,
            min_amount: self.min_amount,
            max_operations: self.max_operations,
            convergence_epsilon: self.epsilon,
            foaf_max_hops: self.foaf_max_hops,
            verify: !self.no_verify,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Network state with balances.
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, default_value_t = 1)]
    pub amount: u64,
    #[arg(long)]
    pub sample_pairs: Option<usize>,
    /// Seed for pair sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report from an earlier evaluation to compare Gini samples against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(short, long = "out-dir")]
    pub out_dir: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let params = SyntheticParams {
        n_nodes: args.nodes,
        attach_degree: args.degree as usize,
        capacity_range: (args.cap_min, args.cap_max),
        seed: args.seed,
    };
    let records = ingestion::generate_synthetic(&params).map_err(|e| match e {
        IngestError::InvalidParameter(m) => CliError::Usage(m),
        other => other.into(),
    })?;
    let file = File::create(&args.output).map_err(io_err(&args.output))?;
    ingestion::write_snapshot(BufWriter::new(file), &records)?;
    println!("wrote {} channels to {}", records.len(), args.output.display());
    Ok(())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    version: &'static str,
    command: &'static str,
    input: String,
    input_sha256: String,
    allocation: &'static str,
    config: &'a SimulationConfig,
    probe_amount_sat: Option<u64>,
    probe_pairs: Option<PairSelection>,
    outputs: Vec<&'static str>,
}

#[derive(Serialize)]
struct OperationLine<'a> {
    seq: u64,
    initiator: &'a str,
    cycle_nodes: Vec<&'a str>,
    cycle_channels: Vec<u32>,
    amount_sat: u64,
    imbalance_after: f64,
}

pub const SIMULATE_OUTPUTS: [&str; 6] = [
    "manifest.json",
    "operations.jsonl",
    "metrics.csv",
    "fees.csv",
    "initial_state.csv",
    "final_state.csv",
];

fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).map_err(io_err(&path))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| CliError::Json { path: path.clone(), source })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(&path))
}

fn write_graph(dir: &Path, name: &str, g: &NetworkGraph) -> Result<(), CliError> {
    ingestion::write_state(create(dir, name)?, g)?;
    Ok(())
}

fn pair_selection(sample_pairs: Option<usize>, seed: u64) -> PairSelection {
    match sample_pairs {
        Some(pairs) => PairSelection::Sample { pairs, seed },
        None => PairSelection::All,
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config = args.config();
    config.validate()?;
    if args.amount == 0 {
        return Err(CliError::Usage("--amount must be at least 1".into()));
    }
    let format = snapshot_format(args.format, &args.input);
    let full = if args.keep_balances {
        ingestion::load_state(&args.input, format)?
    } else {
        let records = ingestion::load_snapshot(&args.input, format)?;
        ingestion::allocate_funds_coinflip(&records, args.seed).map_err(IngestError::from)?
    };
    let g = ingestion::largest_scc(&full);
    if g.node_count() < 2 || g.channel_count() == 0 {
        return Err(CliError::NoRebalancing(format!(
            "the largest liquidity component has {} node(s) and {} channel(s)",
            g.node_count(),
            g.channel_count()
        )));
    }

    fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    let dir = args.out_dir.as_path();
    let selection = pair_selection(args.sample_pairs, args.seed);
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        command: "simulate",
        input: args
            .input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        input_sha256: file_sha256(&args.input)?,
        allocation: if args.keep_balances { "input" } else { "coinflip" },
        config: &config,
        probe_amount_sat: (!args.no_eval).then_some(args.amount),
        probe_pairs: (!args.no_eval).then_some(selection),
        outputs: SIMULATE_OUTPUTS.to_vec(),
    };
    write_json(dir, "manifest.json", &manifest)?;
    write_graph(dir, "initial_state.csv", &g)?;

    let mut probe = PaymentProbe {
        amount: args.amount,
        selection,
    };
    let hook: &mut dyn SampleHook = if args.no_eval { &mut NoEvaluation } else { &mut probe };
    let initial_imbalance = g.network_imbalance().map_err(RebalanceError::from)?;
    let outcome = pcn_rebalance::run_simulation(g, &config, hook)?;
    let g = &outcome.graph;

    let path = dir.join("operations.jsonl");
    let mut w = create(dir, "operations.jsonl")?;
    for op in &outcome.operations {
        let mut nodes = vec![g.name(op.initiator)];
        let mut at = op.initiator;
        for ch in &op.cycle {
            at = g.channels()[ch.index()].other(at).expect("recorded cycle");
            nodes.push(g.name(at));
        }
        let line = OperationLine {
            seq: op.seq,
            initiator: g.name(op.initiator),
            cycle_nodes: nodes,
            cycle_channels: op.cycle.iter().map(|c| c.0).collect(),
            amount_sat: op.amount,
            imbalance_after: op.imbalance_after,
        };
        serde_json::to_writer(&mut w, &line).map_err(|source| CliError::Json { path: path.clone(), source })?;
        writeln!(w).map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("metrics.csv");
    let mut w = csv::Writer::from_writer(create(dir, "metrics.csv")?);
    let csv_err = |source| CliError::Csv { path: path.clone(), source };
    w.write_record(["ops_count", "imbalance", "success_rate", "median_payment_sat"]).map_err(csv_err)?;
    for s in &outcome.samples {
        let (rate, median) = match s.evaluation {
            Some(e) => (e.success_rate.to_string(), e.median_payment.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([s.ops_count.to_string(), s.imbalance.to_string(), rate, median]).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("fees.csv");
    let mut w = csv::Writer::from_writer(create(dir, "fees.csv")?);
    let csv_err = |source| CliError::Csv { path: path.clone(), source };
    w.write_record(["node_id", "net_fee_msat"]).map_err(csv_err)?;
    for u in g.nodes() {
        w.write_record([g.name(u).to_string(), outcome.ledger.net(u).to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;

    write_graph(dir, "final_state.csv", g)?;

    let final_imbalance = g.network_imbalance().map_err(RebalanceError::from)?;
    println!(
        "{} nodes, {} channels: {} operations in {} sweeps, imbalance {:.4} -> {:.4}",
        g.node_count(),
        g.channel_count(),
        outcome.operations.len(),
        outcome.sweeps,
        initial_imbalance,
        final_imbalance
    );
    Ok(())
}

#[derive(Serialize)]
struct Comparison {
    baseline: String,
    ks_distance: f64,
}

fn write_cdf(dir: &Path, name: &str, points: &[CdfPoint]) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    let csv_err = |source| CliError::Csv { path: path.clone(), source };
    w.write_record(["value", "cumulative_fraction"]).map_err(csv_err)?;
    for p in points {
        w.write_record([p.value.to_string(), p.cumulative_fraction.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    if args.amount == 0 {
        return Err(CliError::Usage("--amount must be at least 1".into()));
    }
    let g = ingestion::load_state(&args.input, snapshot_format(args.format, &args.input))?;
    let report = evaluation::evaluate(&g, args.amount, pair_selection(args.sample_pairs, args.seed))?;
    let baseline = match &args.compare {
        Some(path) => {
            let file = File::open(path).map_err(io_err(path))?;
            let base: EvaluationReport = serde_json::from_reader(std::io::BufReader::new(file))
                .map_err(|source| CliError::Json { path: path.clone(), source })?;
            Some((path, evaluation::ks_distance(&base.gini_values, &report.gini_values)?))
        }
        None => None,
    };

    fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    let dir = args.out_dir.as_path();
    write_json(dir, "report.json", &report)?;
    write_cdf(dir, "payment_cdf.csv", &report.payment_size_cdf)?;
    write_cdf(dir, "gini_cdf.csv", &empirical_cdf(&report.gini_values))?;
    println!(
        "imbalance {:.4}, success rate {:.4} at {} sat, median payment {} sat over {} pairs",
        report.network_imbalance, report.success_rate, report.amount_sat, report.median_payment, report.pairs
    );
    if let Some((path, ks)) = baseline {
        write_json(
            dir,
            "comparison.json",
            &Comparison {
                baseline: path.display().to_string(),
                ks_distance: ks,
            },
        )?;
        println!("ks_distance {ks}");
    }
    Ok(())
}
