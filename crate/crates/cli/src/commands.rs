use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use hetsched_core::cluster::ClusterConfig;
use hetsched_core::experiment::{self, ExperimentConfig, ExperimentError};
use hetsched_core::predictor::{self, FitOptions, PredictorSet, ProbeConfig};
use hetsched_core::scheduler::write_decisions_csv;
use hetsched_core::sim;
use hetsched_core::trace::{self, SampleParams, SyntheticParams, TaskDefaults, TraceError};

use crate::{Cli, GenTraceArgs, ProbeFitArgs, SampleTraceArgs, SimArgs};

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn config_err(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{context}: {e}"))
}

fn runtime_err(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{context}: {e}"))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| config_err(path.display(), e))
}

fn config_or_default<T: DeserializeOwned + Default>(cli: &Cli) -> Result<T, CliError> {
    cli.config.as_deref().map(read_json).unwrap_or_else(|| Ok(T::default()))
}

fn load_cluster(path: Option<&Path>) -> Result<ClusterConfig, CliError> {
    match path {
        Some(p) => ClusterConfig::load(p).map_err(|e| config_err(p.display(), e)),
        None => Ok(ClusterConfig::default_testbed()),
    }
}

fn out_dir(cli: &Cli, fallback: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = cli.out.clone().or_else(|| fallback.map(Path::to_owned)).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| runtime_err(dir.display(), e))?;
    Ok(dir)
}

/// Writes `path` through `body`, reporting failures against the path.
fn write_file<E: std::fmt::Display>(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<(), E>,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| runtime_err(path.display(), e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| runtime_err(path.display(), e))?;
    w.flush().map_err(|e| runtime_err(path.display(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| runtime_err(path.display(), e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| runtime_err(path.display(), e))
}

pub fn gen_trace(cli: &Cli, args: &GenTraceArgs) -> Result<(), CliError> {
    let mut params: SyntheticParams = config_or_default(cli)?;
    if let Some(v) = args.jobs {
        params.n_jobs = v;
    }
    if let Some(v) = args.bursts {
        params.bursts = v;
    }
    if let Some(v) = args.horizon_s {
        params.horizon_s = v;
    }
    if let Some(v) = args.burst_window_s {
        params.burst_window_s = v;
    }
    if let Some(v) = args.iter_min {
        params.iter_min = v;
    }
    if let Some(v) = args.iter_max {
        params.iter_max = v;
    }
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let tasks = trace::generate_synthetic(seed, &params).map_err(|e| config_err("gen-trace", e))?;
    let path = out_dir(cli, None)?.join("trace.csv");
    write_file(&path, |w| trace::write_tasks_csv(w, &tasks))?;
    println!("wrote {} tasks to {}", tasks.len(), path.display());
    Ok(())
}

fn sample_stage(e: &TraceError) -> &'static str {
    match e {
        TraceError::NotBijective(..) | TraceError::UnmappedType(_) => "map_machine_types",
        TraceError::NoTargetNode(_) | TraceError::UntypedMachine(_) => "fold_machines",
        TraceError::IncompleteRecord(_) => "tasks_from_trace",
        _ => "sample",
    }
}

pub fn sample_trace(cli: &Cli, args: &SampleTraceArgs) -> Result<(), CliError> {
    let mut params: SampleParams = config_or_default(cli)?;
    if let Some(v) = args.offset_s {
        params.window.offset_s = v;
    }
    if let Some(v) = args.duration_s {
        params.window.duration_s = v;
    }
    if let Some(v) = args.top_k {
        params.top_k = v;
    }
    if let Some(p) = &args.type_map {
        params.type_map = read_json(p)?;
    }
    params.skip_machine_steps |= args.skip_machine_steps;

    let cluster = load_cluster(args.cluster.as_deref())?;
    let reference = cluster.reference_machine().ok_or_else(|| CliError::Config("cluster has no nodes".into()))?;
    let input = File::open(&args.input).map_err(|e| config_err(args.input.display(), e))?;
    let raw = trace::read_trace_csv(input).map_err(|e| config_err(args.input.display(), e))?;

    let sampled = trace::sample(&raw, &params, &cluster.nodes)
        .map_err(|e| runtime_err(format!("sample-trace: {}", sample_stage(&e)), e))?;
    let defaults = TaskDefaults { iterations: args.default_iterations };
    let tasks = trace::tasks_from_trace(&sampled.events, reference, defaults)
        .map_err(|e| runtime_err(format!("sample-trace: {}", sample_stage(&e)), e))?;

    let dir = out_dir(cli, None)?;
    write_file(&dir.join("sampled_trace.csv"), |w| trace::write_trace_csv(w, &sampled.events))?;
    write_file(&dir.join("tasks.csv"), |w| trace::write_tasks_csv(w, &tasks))?;
    let mapping = dir.join("machine_mapping.json");
    match &sampled.fold {
        Some(fold) => write_json(&mapping, fold)?,
        None if mapping.exists() => fs::remove_file(&mapping).map_err(|e| runtime_err(mapping.display(), e))?,
        None => {}
    }
    println!(
        "kept {} events, {} tasks from {} users, {} machines",
        sampled.events.len(),
        tasks.len(),
        sampled.users.len(),
        sampled.eligible.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    seed: u64,
    noise_sd_rel: f64,
    samples: usize,
    models: usize,
    held_out_max_rel_error: f64,
}

pub fn probe_fit(cli: &Cli, args: &ProbeFitArgs) -> Result<(), CliError> {
    let cluster = load_cluster(args.cluster.as_deref())?;
    let mut probe: ProbeConfig = config_or_default(cli)?;
    if let Some(v) = args.noise {
        probe.noise_sd_rel = v;
    }
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let samples = predictor::run_probing(&cluster, &probe, seed).map_err(|e| config_err("probe-fit", e))?;
    let set =
        PredictorSet::train(samples.clone(), 0.0, FitOptions::default()).map_err(|e| runtime_err("probe-fit", e))?;
    let error =
        set.max_relative_error(&cluster, &ProbeConfig::held_out_grid()).map_err(|e| runtime_err("probe-fit", e))?;

    let dir = out_dir(cli, None)?;
    write_file(&dir.join("samples.csv"), |w| predictor::write_samples_csv(w, &samples))?;
    fs::write(dir.join("models.json"), set.to_json()).map_err(|e| runtime_err(dir.display(), e))?;
    let report = FitReport {
        seed,
        noise_sd_rel: probe.noise_sd_rel,
        samples: samples.len(),
        models: set.models.len(),
        held_out_max_rel_error: error,
    };
    write_json(&dir.join("fit_report.json"), &report)?;
    println!("fitted {} models from {} samples; held-out max relative error {error:e}", report.models, report.samples);
    Ok(())
}

fn load_experiment(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            ExperimentError::Io { .. } | ExperimentError::Json { .. } => CliError::Config(e.to_string()),
            e => config_err(p.display(), e),
        }),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn sim(cli: &Cli, args: &SimArgs) -> Result<(), CliError> {
    let cfg = load_experiment(cli)?;
    let policies = cfg.policies();
    let pc = match &args.scheduler {
        Some(label) => policies
            .iter()
            .find(|p| &p.label == label)
            .ok_or_else(|| CliError::Config(format!("no scheduler labelled {label}")))?,
        None => &policies[0],
    };
    let seed = cli.seed.unwrap_or(cfg.seeds[0]);
    let cluster = cfg.cluster_config().map_err(|e| config_err("cluster", e))?;
    let tasks = cfg.tasks(seed).map_err(|e| config_err("trace", e))?;
    let predictors = match &args.models {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(p.display(), e))?;
            PredictorSet::from_json(&text).map_err(|e| config_err(p.display(), e))?
        }
        None => PredictorSet::probe_and_train(&cluster, &cfg.probe, seed).map_err(|e| runtime_err("probe", e))?,
    };
    let report = sim::run(&cluster, &tasks, &pc.policy, &predictors, &cfg.sim)
        .map_err(|e| runtime_err(format!("sim {}", pc.label), e))?;

    let dir = out_dir(cli, cfg.out_dir.as_deref())?;
    fs::write(dir.join("report.json"), report.to_json()).map_err(|e| runtime_err(dir.display(), e))?;
    write_file(&dir.join("utilization.csv"), |w| report.write_utilization_csv(w))?;
    write_file(&dir.join("percentiles.csv"), |w| report.write_percentiles_csv(w))?;
    write_file(&dir.join("decisions.csv"), |w| write_decisions_csv(w, &report.decisions))?;
    println!(
        "{}: makespan {} s, cluster energy {} kJ, task energy {} kJ, {} migrations",
        pc.label, report.makespan_s, report.cluster_energy_kj, report.task_energy_kj, report.migrations
    );
    Ok(())
}

pub fn sweep(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = load_experiment(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    let rows = experiment::sweep(&cfg, cli.parallel).map_err(|e| match e {
        ExperimentError::Sim { .. } => CliError::Runtime(e.to_string()),
        e => config_err("sweep", e),
    })?;
    let path = out_dir(cli, cfg.out_dir.as_deref())?.join("summary.csv");
    write_file(&path, |w| experiment::write_summary_csv(w, &rows))?;
    for r in &rows {
        println!(
            "{:>6} seed {:>4}  makespan {:>10.2} s  cluster {:>9.3} kJ  tasks {:>9.3} kJ  migrations {}",
            r.scheduler, r.seed, r.makespan_s, r.cluster_energy_kj, r.task_energy_kj, r.migrations
        );
    }
    Ok(())
}
