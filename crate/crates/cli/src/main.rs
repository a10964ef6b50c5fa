use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gcnet::bench::{run_benchmark, summarize, write_records_csv, write_summary_csv, BenchConfig};
use gcnet::fixtures::{fixture_battery, oracle_trial};
use gcnet::io::{
    model_to_json, read_edge_list, read_series_csv, write_edge_list, write_series_csv, write_stats_csv,
};
use gcnet::lasso::adalasso_graph;
use gcnet::metrics::confusion;
use gcnet::pairwise::RestrictedOrder;
use gcnet::var::default_burn_in;
use gcnet::{build_var_model, pwgc_pipeline, random_dag, random_scg, simulate, DirectedGraph, PairwiseConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "gcnet", version, about = "Granger-causality graph learning for VAR time series")]
struct Cli {
    /// Worker threads for pairwise tests and benchmark replicates.
    #[arg(long, global = true, env = "GCNET_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random graph and VAR model, then simulate a series from it.
    Simulate(SimulateArgs),
    /// Estimate a graph with pairwise causality tests.
    Pwgc(PwgcArgs),
    /// Estimate a graph with the adaptive LASSO baseline.
    Alasso(AlassoArgs),
    /// Run a Monte-Carlo benchmark from a JSON config.
    Bench(BenchArgs),
    /// Check oracle recovery on known systems and random strongly causal graphs.
    CheckOracle(CheckOracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Topology {
    Scg,
    Dag,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "scg")]
    topology: Topology,
    /// Edge probability for `--topology dag`.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Number of samples.
    #[arg(long = "T")]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Directory receiving graph.txt, model.json and series.csv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Write a header row in the series CSV.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct InputArgs {
    /// Series CSV, one row per time step.
    #[arg(long)]
    input: PathBuf,
    /// The series CSV starts with a header row.
    #[arg(long)]
    header: bool,
    #[arg(long, default_value_t = 10)]
    p_max: usize,
    /// Edge list of the true graph; prints MCC and FDP when given.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Estimated graph edge list.
    #[arg(long, default_value = "graph.txt")]
    out_graph: PathBuf,
    /// Refit or penalized model as JSON.
    #[arg(long)]
    out_model: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Restricted {
    Bivariate,
    MaxOfBoth,
}

#[derive(Args)]
struct PwgcArgs {
    #[command(flatten)]
    io: InputArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Order of the restricted univariate model in each test.
    #[arg(long, value_enum, default_value = "bivariate")]
    restricted: Restricted,
    /// Write `i,j,p_ij,F,P` for every ordered pair.
    #[arg(long)]
    dump_stats: Option<PathBuf>,
    /// Write recovery decisions as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct AlassoArgs {
    #[command(flatten)]
    io: InputArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON benchmark config.
    config: PathBuf,
    /// Overrides `records_csv` from the config.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Overrides `summary_csv` from the config.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct CheckOracleArgs {
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    /// Bad arguments, unreadable or malformed input.
    Input(String),
    /// A check ran and did not pass.
    Check(String),
}

impl From<gcnet::Error> for Failure {
    fn from(e: gcnet::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let g = match a.topology {
        Topology::Scg => random_scg(a.n, &mut rng),
        Topology::Dag => {
            let q = a.q.ok_or_else(|| Failure::Input("--topology dag needs --q".into()))?;
            random_dag(a.n, q, &mut rng)?
        }
    };
    let model = build_var_model(&g, a.p, &mut rng)?;
    let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(a.n, a.p));
    let x = simulate(&model, a.t, burn_in, &mut rng)?;
    fs::create_dir_all(&a.out_dir)?;
    let mut w = create(&a.out_dir.join("graph.txt"))?;
    write_edge_list(&g, &mut w)?;
    w.flush()?;
    fs::write(a.out_dir.join("model.json"), model_to_json(&model)?)?;
    let mut w = create(&a.out_dir.join("series.csv"))?;
    write_series_csv(&x, a.header, &mut w)?;
    w.flush()?;
    Ok(())
}

fn load_series(io: &InputArgs) -> Result<gcnet::SeriesMatrix, Failure> {
    read_series_csv(open(&io.input)?, io.header)
        .map_err(|e| Failure::Input(format!("{}: {e}", io.input.display())))
}

fn report_truth(io: &InputArgs, est: &DirectedGraph) -> CmdResult {
    if let Some(path) = &io.truth {
        let truth = read_edge_list(open(path)?)?;
        let c = confusion(&truth, est)?;
        println!("mcc {}", c.mcc());
        println!("fdp {}", c.fdp());
        println!("tp {} fp {} fn {} tn {}", c.tp, c.fp, c.fn_, c.tn);
    }
    Ok(())
}

fn write_graph(path: &Path, g: &DirectedGraph) -> CmdResult {
    let mut w = create(path)?;
    write_edge_list(g, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_pwgc(a: PwgcArgs) -> CmdResult {
    let x = load_series(&a.io)?;
    let mut config = PairwiseConfig::new(a.io.p_max);
    config.restricted_order = match a.restricted {
        Restricted::Bivariate => RestrictedOrder::Bivariate,
        Restricted::MaxOfBoth => RestrictedOrder::MaxOfBoth,
    };
    let fit = pwgc_pipeline(&x, config, a.alpha)?;
    write_graph(&a.io.out_graph, &fit.graph)?;
    if let Some(path) = &a.io.out_model {
        fs::write(path, model_to_json(&fit.refit.model)?)?;
    }
    if let Some(path) = &a.dump_stats {
        let mut w = create(path)?;
        write_stats_csv(&fit.stats, &mut w)?;
        w.flush()?;
    }
    if let Some(path) = &a.trace {
        let mut w = create(path)?;
        fit.trace.write_jsonl(&mut w)?;
        w.flush()?;
    }
    println!("edges {}", fit.graph.edge_count());
    println!("delta {}", fit.delta);
    report_truth(&a.io, &fit.graph)
}

fn cmd_alasso(a: AlassoArgs) -> CmdResult {
    let x = load_series(&a.io)?;
    let fit = adalasso_graph(&x, a.io.p_max)?;
    for (node, msg) in &fit.failures {
        eprintln!("node {}: {msg}", node + 1);
    }
    write_graph(&a.io.out_graph, &fit.graph)?;
    if let Some(path) = &a.io.out_model {
        fs::write(path, model_to_json(&fit.model)?)?;
    }
    println!("edges {}", fit.graph.edge_count());
    report_truth(&a.io, &fit.graph)
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let text = fs::read_to_string(&a.config).map_err(|e| Failure::Input(format!("{}: {e}", a.config.display())))?;
    let cfg: BenchConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", a.config.display())))?;
    cfg.validate()?;
    let records = run_benchmark(&cfg)?;
    let records_path = a.records.or_else(|| cfg.records_csv.as_ref().map(PathBuf::from));
    let summary_path = a.summary.or_else(|| cfg.summary_csv.as_ref().map(PathBuf::from));
    let summary = summarize(&records);
    match records_path {
        Some(p) => {
            let mut w = create(&p)?;
            write_records_csv(&records, cfg.include_timing, &mut w)?;
            w.flush()?;
        }
        None => write_records_csv(&records, cfg.include_timing, std::io::stdout().lock())?,
    }
    match summary_path {
        Some(p) => {
            let mut w = create(&p)?;
            write_summary_csv(&summary, &mut w)?;
            w.flush()?;
        }
        None => write_summary_csv(&summary, std::io::stdout().lock())?,
    }
    let failed = records.iter().filter(|r| !r.succeeded()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", records.len());
    }
    if failed * 10 > records.len() {
        return Err(Failure::Check(format!("{failed} of {} runs failed", records.len())));
    }
    Ok(())
}

/// Oracle trials cycle through these sizes and lag orders.
const TRIAL_SIZES: [usize; 3] = [6, 10, 20];
const TRIAL_ORDERS: [usize; 3] = [1, 2, 5];

fn cmd_check_oracle(a: CheckOracleArgs) -> CmdResult {
    let mut failed = 0;
    for f in fixture_battery() {
        println!("{} {}: {}", if f.passed { "PASS" } else { "FAIL" }, f.name, f.detail);
        failed += usize::from(!f.passed);
    }
    for k in 0..a.trials {
        let n = TRIAL_SIZES[k % 3];
        let p = TRIAL_ORDERS[(k / 3) % 3];
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        rng.set_stream(k as u64);
        match oracle_trial(n, p, &mut rng) {
            Ok(t) => {
                println!(
                    "{} trial {k}: n={n} p={p} missing={} extra={}",
                    if t.exact { "PASS" } else { "FAIL" },
                    t.missing,
                    t.extra
                );
                failed += usize::from(!t.exact);
            }
            Err(e) => {
                println!("FAIL trial {k}: n={n} p={p} {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} checks failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Pwgc(a) => cmd_pwgc(a),
        Command::Alasso(a) => cmd_alasso(a),
        Command::Bench(a) => cmd_bench(a),
        Command::CheckOracle(a) => cmd_check_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
