//! `mrf-spg` command-line interface.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrf_spg::gibbs::InitMode;
use mrf_spg::optimizer::{TauStrategy, ThetaInit};
use mrf_spg::MrfError;

#[derive(Debug, Parser)]
#[command(
    name = "mrf-spg",
    version,
    about = "Sparse binary MRF structure learning by stochastic proximal gradient"
)]
struct Cli {
    /// Worker threads for chain-parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random sparse ground-truth model.
    Generate(GenerateArgs),
    /// Sample a dataset from a model with independent Gibbs chains.
    Sample(SampleArgs),
    /// Learn a sparse model from a binary CSV dataset.
    Learn(LearnArgs),
    /// Score a learned model's structure against a ground truth.
    Eval(EvalArgs),
    /// Tabulate the gradient-error bound over a range of chain lengths.
    Bounds(BoundsArgs),
    /// Exact inference by enumeration, for small models.
    Oracle(OracleArgs),
    /// Run a packaged experiment.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0.3)]
    edge_prob: f64,
    #[arg(long, default_value_t = 1.0)]
    weight_low: f64,
    #[arg(long, default_value_t = 2.0)]
    weight_high: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LearnArgs {
    /// Binary CSV with header `x1,...,xp`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run configuration JSON; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Treat cells other than 0/1 as 0.
    #[arg(long)]
    impute_missing: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    q: Option<usize>,
    /// `fixed:N`, `increasing` or `tay`.
    #[arg(long)]
    strategy: Option<TauStrategy>,
    #[arg(long)]
    tau_max: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    stop_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Chain start: `uniform`, `data` or `persistent`.
    #[arg(long)]
    init_mode: Option<InitMode>,
    /// Starting parameters: `zero` or `random:SCALE`.
    #[arg(long)]
    init: Option<ThetaInit>,
    #[arg(long)]
    beta_total: Option<f64>,
    /// Evaluate the non-asymptotic criterion at each adaptive step.
    #[arg(long)]
    conservative: bool,
    /// Record the exact objective per iteration (small models only).
    #[arg(long)]
    exact_obj: bool,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Where the resolved configuration is written; defaults to the
    /// directory of the model or trace output.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Fill the `time_ms` trace column. Timings make traces
    /// non-reproducible, so it is off by default.
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Metrics JSON; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1)]
    tau_min: usize,
    #[arg(long, default_value_t = 50)]
    tau_max: usize,
    /// CSV output; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OracleOp {
    LogPartition,
    Moments,
    Gradient,
    Objective,
    Influence,
    Tv,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(value_enum)]
    op: OracleOp,
    #[arg(long)]
    model: PathBuf,
    /// Dataset for `gradient` and `objective`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Start state for `tv`, as a 0/1 string such as `0101`.
    #[arg(long)]
    x0: Option<String>,
    #[arg(long, default_value_t = 1)]
    tau: usize,
}

#[derive(Debug, Subcommand)]
enum ExperimentKind {
    /// Generate, sample, learn with every strategy and score, per seed.
    PaperSynthetic(SyntheticArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(subcommand)]
    kind: ExperimentKind,
}

#[derive(Debug, Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 0.3)]
    edge_prob: f64,
    #[arg(long, default_value_t = 0.025)]
    lambda: f64,
    #[arg(long, default_value_t = 0.4)]
    alpha: f64,
    #[arg(long, default_value_t = 2000)]
    q: usize,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 500)]
    tau_max: usize,
    /// First seed; runs use `seed, seed+1, ...`.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    wall_clock: bool,
}

fn exit_code(e: &MrfError) -> u8 {
    match e {
        MrfError::Capacity { .. } => 4,
        _ => 3,
    }
}

fn error_kind(e: &MrfError) -> &'static str {
    match e {
        MrfError::InvalidInput(_) => "invalid_input",
        MrfError::DimensionMismatch { .. } => "dimension_mismatch",
        MrfError::Capacity { .. } => "capacity",
        MrfError::Parse { .. } => "parse",
        MrfError::Schema { .. } => "schema",
        MrfError::UndefinedAuc(_) => "undefined_auc",
        MrfError::Io(_) => "io",
        MrfError::Json(_) => "json",
        MrfError::Csv(_) => "csv",
    }
}

fn report(kind: &str, message: &str) {
    let json = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{json}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            report("usage", &e.kind().to_string());
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            report("usage", "--threads must be at least 1");
            return ExitCode::from(2);
        }
        #[cfg(feature = "parallel")]
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Sample(a) => commands::sample(a),
        Command::Learn(a) => commands::learn(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Experiment(a) => match a.kind {
            ExperimentKind::PaperSynthetic(s) => commands::paper_synthetic(s),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(error_kind(&e), &e.to_string());
            ExitCode::from(exit_code(&e))
        }
    }
}
