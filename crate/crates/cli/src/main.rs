//! `hetsched`: trace generation, trace sampling, model training, single
//! simulations and policy sweeps.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "hetsched", version, about = "Energy- and heterogeneity-aware scheduling simulator")]
struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing. Defaults to the configuration's
    /// `out_dir`, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed; overrides the seed list of a sweep configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum number of simulations run at once.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic burst trace.
    GenTrace(GenTraceArgs),
    /// Sample a normalized cluster trace down to a testbed workload.
    SampleTrace(SampleTraceArgs),
    /// Probe every machine type and fit the prediction models.
    ProbeFit(ProbeFitArgs),
    /// Run one scheduler over one trace.
    Sim(SimArgs),
    /// Compare schedulers across seeds.
    Sweep,
}

#[derive(Debug, Args)]
struct GenTraceArgs {
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    bursts: Option<usize>,
    #[arg(long)]
    horizon_s: Option<f64>,
    #[arg(long)]
    burst_window_s: Option<f64>,
    #[arg(long)]
    iter_min: Option<u64>,
    #[arg(long)]
    iter_max: Option<u64>,
}

#[derive(Debug, Args)]
struct SampleTraceArgs {
    /// Normalized trace CSV.
    #[arg(long)]
    input: PathBuf,
    /// Testbed cluster JSON; the built-in testbed when absent.
    #[arg(long)]
    cluster: Option<PathBuf>,
    #[arg(long)]
    offset_s: Option<f64>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    /// JSON object mapping trace machine types to testbed types.
    #[arg(long)]
    type_map: Option<PathBuf>,
    /// The trace has no machine information: skip eligibility, type
    /// mapping and folding.
    #[arg(long)]
    skip_machine_steps: bool,
    /// Iterations for tasks without a finish record.
    #[arg(long, default_value_t = 750)]
    default_iterations: u64,
}

#[derive(Debug, Args)]
struct ProbeFitArgs {
    /// Cluster JSON; the built-in testbed when absent.
    #[arg(long)]
    cluster: Option<PathBuf>,
    /// Relative standard deviation of measurement noise.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Label of the scheduler to run; the first configured one when absent.
    #[arg(long)]
    scheduler: Option<String>,
    /// Trained models JSON; probe and train from the seed when absent.
    #[arg(long)]
    models: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenTrace(a) => commands::gen_trace(&cli, a),
        Command::SampleTrace(a) => commands::sample_trace(&cli, a),
        Command::ProbeFit(a) => commands::probe_fit(&cli, a),
        Command::Sim(a) => commands::sim(&cli, a),
        Command::Sweep => commands::sweep(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
