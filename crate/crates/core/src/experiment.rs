//! Policy comparisons over a shared trace and shared predictors.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterConfig, ClusterError, Task};
use crate::predictor::{PredictorError, PredictorSet, ProbeConfig};
use crate::scheduler::{Policy, PolicyConfig};
use crate::sim::{self, SimError, SimOptions};
use crate::trace::{self, SyntheticParams, TraceError};

/// H value of the "rand" configuration.
pub const RAND_H: f64 = 0.618;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("experiment lists no schedulers")]
    NoSchedulers,
    #[error("experiment lists no seeds")]
    NoSeeds,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error("{label} (seed {seed}): {source}")]
    Sim { label: String, seed: u64, source: SimError },
}

/// Where the tasks come from. A synthetic trace is regenerated per seed; a
/// task file is shared by all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TraceSource {
    Synthetic {
        #[serde(default)]
        params: SyntheticParams,
    },
    File {
        path: PathBuf,
    },
}

impl Default for TraceSource {
    fn default() -> Self {
        TraceSource::Synthetic { params: SyntheticParams::default() }
    }
}

/// Experiment description as stored on disk. Relative paths resolve
/// against the directory of the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Cluster file; the default testbed when absent.
    pub cluster: Option<PathBuf>,
    pub trace: TraceSource,
    pub schedulers: Vec<PolicyConfig>,
    pub seeds: Vec<u64>,
    /// Overrides the rescheduling period of every energy-aware scheduler.
    pub reschedule_interval_s: Option<f64>,
    pub probe: ProbeConfig,
    pub sim: SimOptions,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cluster: None,
            trace: TraceSource::default(),
            schedulers: default_schedulers(),
            seeds: vec![42],
            reschedule_interval_s: None,
            probe: ProbeConfig::default(),
            sim: SimOptions::default(),
            out_dir: None,
        }
    }
}

/// H from 0 to 1 in steps of 0.2, then "rand" and the baseline.
pub fn default_schedulers() -> Vec<PolicyConfig> {
    let mut out: Vec<PolicyConfig> = (0..=5)
        .map(|i| {
            let h = f64::from(i) / 5.0;
            PolicyConfig::new(format!("h{h:.1}"), Policy::heats(h))
        })
        .collect();
    out.push(PolicyConfig::new("rand", Policy::heats(RAND_H)));
    out.push(PolicyConfig::new("k8s", Policy::K8sBaseline));
    out
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_owned(), source })?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|source| ExperimentError::Json { path: path.to_owned(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.cluster.as_mut() {
            resolve(p);
        }
        if let TraceSource::File { path } = &mut cfg.trace {
            resolve(path);
        }
        if let Some(p) = cfg.out_dir.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the scheduler and seed lists and that referenced files exist.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.schedulers.is_empty() {
            return Err(ExperimentError::NoSchedulers);
        }
        if self.seeds.is_empty() {
            return Err(ExperimentError::NoSeeds);
        }
        for p in self.cluster.iter().chain(match &self.trace {
            TraceSource::File { path } => Some(path),
            TraceSource::Synthetic { .. } => None,
        }) {
            if !p.is_file() {
                return Err(ExperimentError::Io {
                    path: p.clone(),
                    source: io::Error::new(io::ErrorKind::NotFound, "file not found"),
                });
            }
        }
        Ok(())
    }

    pub fn cluster_config(&self) -> Result<ClusterConfig, ExperimentError> {
        match &self.cluster {
            Some(p) => Ok(ClusterConfig::load(p)?),
            None => Ok(ClusterConfig::default_testbed()),
        }
    }

    pub fn tasks(&self, seed: u64) -> Result<Vec<Task>, ExperimentError> {
        match &self.trace {
            TraceSource::Synthetic { params } => Ok(trace::generate_synthetic(seed, params)?),
            TraceSource::File { path } => {
                let file = fs::File::open(path).map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
                Ok(trace::read_tasks_csv(file)?)
            }
        }
    }

    /// Scheduler list with the interval override applied.
    pub fn policies(&self) -> Vec<PolicyConfig> {
        self.schedulers
            .iter()
            .cloned()
            .map(|mut pc| {
                if let (Some(x), Policy::Heats { reschedule_interval_s, .. }) =
                    (self.reschedule_interval_s, &mut pc.policy)
                {
                    *reschedule_interval_s = x;
                }
                pc
            })
            .collect()
    }
}

/// One summary line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheduler: String,
    pub h_value: Option<f64>,
    pub seed: u64,
    pub makespan_s: f64,
    pub cluster_energy_kj: f64,
    pub task_energy_kj: f64,
    pub migrations: usize,
}

/// Runs every (seed, scheduler) pair with at most `parallel` simulations in
/// flight. Each seed gets its own trace and predictors, shared by all of
/// its schedulers. Rows come back ordered by seed position, then scheduler
/// position.
pub fn sweep(cfg: &ExperimentConfig, parallel: usize) -> Result<Vec<SweepRow>, ExperimentError> {
    cfg.validate()?;
    let cluster = cfg.cluster_config()?;
    let policies = cfg.policies();
    let options = SimOptions { record_monitoring: false, ..cfg.sim.clone() };
    let mut inputs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let tasks = cfg.tasks(seed)?;
        let predictors = PredictorSet::probe_and_train(&cluster, &cfg.probe, seed)?;
        inputs.push((seed, tasks, predictors));
    }

    let jobs: Vec<(usize, usize)> = (0..inputs.len()).flat_map(|s| (0..policies.len()).map(move |p| (s, p))).collect();
    let results: Mutex<Vec<Option<Result<SweepRow, ExperimentError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);

    let run_one = |(s, p): (usize, usize)| -> Result<SweepRow, ExperimentError> {
        let (seed, tasks, predictors) = &inputs[s];
        let pc = &policies[p];
        let report = sim::run(&cluster, tasks, &pc.policy, predictors, &options)
            .map_err(|source| ExperimentError::Sim { label: pc.label.clone(), seed: *seed, source })?;
        Ok(SweepRow {
            scheduler: pc.label.clone(),
            h_value: pc.policy.h_value(),
            seed: *seed,
            makespan_s: report.makespan_s,
            cluster_energy_kj: report.cluster_energy_kj,
            task_energy_kj: report.task_energy_kj,
            migrations: report.migrations,
        })
    };

    std::thread::scope(|scope| {
        for _ in 0..parallel.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&job) = jobs.get(i) else { break };
                let row = run_one(job);
                results.lock().expect("no worker panicked")[i] = Some(row);
            });
        }
    });

    results.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every job ran")).collect()
}

pub fn write_summary_csv<W: io::Write>(writer: W, rows: &[SweepRow]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record([
        "scheduler",
        "h_value",
        "seed",
        "makespan_s",
        "cluster_energy_kj",
        "task_energy_kj",
        "migrations",
    ])?;
    for r in rows {
        w.write_record([
            r.scheduler.clone(),
            r.h_value.map(|h| h.to_string()).unwrap_or_default(),
            r.seed.to_string(),
            r.makespan_s.to_string(),
            r.cluster_energy_kj.to_string(),
            r.task_energy_kj.to_string(),
            r.migrations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(schedulers: Vec<PolicyConfig>, seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            trace: TraceSource::Synthetic { params: SyntheticParams { n_jobs: 40, ..SyntheticParams::default() } },
            schedulers,
            seeds,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_set_has_eight_configurations() {
        let s = default_schedulers();
        assert_eq!(s.len(), 8);
        let hs: Vec<Option<f64>> = s.iter().map(|p| p.policy.h_value()).collect();
        assert_eq!(hs, vec![Some(0.0), Some(0.2), Some(0.4), Some(0.6), Some(0.8), Some(1.0), Some(0.618), None]);
        assert_eq!(s[7].label, "k8s");
    }

    #[test]
    fn one_scheduler_three_seeds_gives_three_rows() {
        let cfg = small(vec![PolicyConfig::new("h1", Policy::heats(1.0))], vec![1, 2, 3]);
        let rows = sweep(&cfg, 2).unwrap();
        assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let cfg = small(default_schedulers(), vec![5, 6]);
        let serial = sweep(&cfg, 1).unwrap();
        let parallel = sweep(&cfg, 8).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial.len(), 16);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_summary_csv(&mut a, &serial).unwrap();
        write_summary_csv(&mut b, &parallel).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().contains("\nk8s,,5,"));
    }

    #[test]
    fn interval_override_reaches_every_heats_policy() {
        let cfg = ExperimentConfig { reschedule_interval_s: Some(15.0), ..ExperimentConfig::default() };
        for p in cfg.policies() {
            assert!(matches!(p.policy.reschedule_interval_s(), None | Some(15.0)));
        }
    }

    #[test]
    fn empty_lists_are_rejected() {
        assert!(matches!(small(vec![], vec![1]).validate(), Err(ExperimentError::NoSchedulers)));
        assert!(matches!(small(default_schedulers(), vec![]).validate(), Err(ExperimentError::NoSeeds)));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
