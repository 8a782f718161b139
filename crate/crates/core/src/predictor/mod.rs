//! Probing and per-machine-type regression models for task energy and runtime.
//!
//! Probing runs two CPU-bound benchmark families on every machine type under
//! both governors and records runtime and task-attributed energy. One linear
//! model per (machine type, governor, target) is then fitted on the features
//! `(cpu_req, mem_req_mib, iterations)`.

pub mod regression;

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterConfig, GovernorMode, Task};
use crate::rng::Rng;

pub use regression::{fit_ols, LinearModel, OlsError, Target};

pub const FEATURE_NAMES: [&str; 3] = ["cpu_req", "mem_req_mib", "iterations"];
/// Lower bound applied to every prediction.
pub const DEFAULT_CLAMP: f64 = 1e-6;
/// Learning period used by the deployed system: one day.
pub const DEFAULT_LEARNING_PERIOD_S: f64 = 86_400.0;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("EmptyProbeGrid: probe grid has no points")]
    EmptyProbeGrid,
    #[error("invalid noise level {0}")]
    InvalidNoise(f64),
    #[error("Underdetermined: {key} has {rows} samples, needs at least {needed}")]
    Underdetermined { key: String, rows: usize, needed: usize },
    #[error("SingularDesign: {key}")]
    SingularDesign { key: String },
    #[error("non-positive target value in samples for {key}")]
    NonPositiveTarget { key: String },
    #[error("ModelMissing({type_id}, {governor}, {target})")]
    ModelMissing { type_id: String, governor: GovernorMode, target: Target },
    #[error("refresh period must be positive, got {0}")]
    InvalidPeriod(f64),
    #[error("probe samples: {0}")]
    Csv(#[from] csv::Error),
    #[error("models: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Workload {
    #[serde(rename = "kmeans")]
    KMeansLike,
    #[serde(rename = "matmul")]
    MatMulLike,
}

impl Workload {
    pub const ALL: [Workload; 2] = [Workload::KMeansLike, Workload::MatMulLike];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub type_id: String,
    pub governor: GovernorMode,
    pub workload: Workload,
    pub cpu_req: f64,
    pub mem_req_mib: u64,
    pub iterations: u64,
    pub measured_runtime_s: f64,
    pub measured_energy_j: f64,
}

impl ProbeSample {
    fn features(&self) -> Vec<f64> {
        vec![self.cpu_req, self.mem_req_mib as f64, self.iterations as f64]
    }

    fn target(&self, target: Target) -> f64 {
        match target {
            Target::EnergyJ => self.measured_energy_j,
            Target::RuntimeS => self.measured_runtime_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub cpu_req: f64,
    pub mem_req_mib: u64,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub grid: Vec<GridPoint>,
    /// Relative standard deviation of the multiplicative measurement noise.
    pub noise_sd_rel: f64,
    /// Per-iteration cost of the matrix-multiplication probe relative to k-means.
    #[serde(default = "default_matmul_factor")]
    pub matmul_factor: f64,
}

fn default_matmul_factor() -> f64 {
    1.7
}

impl ProbeConfig {
    /// Full factorial grid over cores {1, 2}, memory {256, 512} MiB and
    /// iterations {500, 750, 1000}.
    /// Points off the default grid, for validating fitted models.
    pub fn held_out_grid() -> Vec<GridPoint> {
        [(3.0, 384, 620), (1.5, 300, 987), (2.0, 512, 501), (4.0, 1000, 2000)]
            .into_iter()
            .map(|(cpu_req, mem_req_mib, iterations)| GridPoint { cpu_req, mem_req_mib, iterations })
            .collect()
    }

    pub fn default_grid() -> Vec<GridPoint> {
        let mut grid = Vec::new();
        for cpu_req in [1.0, 2.0] {
            for mem_req_mib in [256, 512] {
                for iterations in [500, 750, 1000] {
                    grid.push(GridPoint { cpu_req, mem_req_mib, iterations });
                }
            }
        }
        grid
    }

    pub fn with_noise(noise_sd_rel: f64) -> Self {
        Self { grid: Self::default_grid(), noise_sd_rel, matmul_factor: default_matmul_factor() }
    }
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self::with_noise(0.02)
    }
}

fn noise_factor(rng: &mut Rng, sd: f64) -> f64 {
    (1.0 + sd * rng.next_gaussian()).max(1e-3)
}

/// Emits one sample per (machine type, governor, workload, grid point),
/// iterating machine types by id and governors powersave-first.
pub fn run_probing(
    cluster: &ClusterConfig,
    config: &ProbeConfig,
    seed: u64,
) -> Result<Vec<ProbeSample>, PredictorError> {
    if config.grid.is_empty() {
        return Err(PredictorError::EmptyProbeGrid);
    }
    if !(config.noise_sd_rel >= 0.0) {
        return Err(PredictorError::InvalidNoise(config.noise_sd_rel));
    }
    let mut machines: Vec<_> = cluster.machines.iter().collect();
    machines.sort_by(|a, b| a.type_id.cmp(&b.type_id));

    let mut rng = Rng::new(seed);
    let mut samples = Vec::with_capacity(machines.len() * 4 * config.grid.len());
    for spec in machines {
        for governor in GovernorMode::ALL {
            for workload in Workload::ALL {
                let scale = match workload {
                    Workload::KMeansLike => 1.0,
                    Workload::MatMulLike => config.matmul_factor,
                };
                for point in &config.grid {
                    let runtime = spec.runtime_s(governor, point.iterations as f64) * scale;
                    let energy = spec.active_power_w.get(governor) * runtime;
                    let rt_noise = noise_factor(&mut rng, config.noise_sd_rel);
                    let en_noise = noise_factor(&mut rng, config.noise_sd_rel);
                    samples.push(ProbeSample {
                        type_id: spec.type_id.clone(),
                        governor,
                        workload,
                        cpu_req: point.cpu_req,
                        mem_req_mib: point.mem_req_mib,
                        iterations: point.iterations,
                        measured_runtime_s: runtime * rt_noise,
                        measured_energy_j: energy * en_noise,
                    });
                }
            }
        }
    }
    Ok(samples)
}

pub fn model_key(type_id: &str, governor: GovernorMode, target: Target) -> String {
    format!("{type_id}:{governor}:{target}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Add a small ridge term when the Gram matrix is numerically singular.
    pub ridge_fallback: bool,
    /// Only samples of this workload are used; the scheduled tasks are
    /// k-means-like, so the matmul probes are characterization data.
    pub workload: Workload,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { ridge_fallback: true, workload: Workload::KMeansLike }
    }
}

pub fn fit(
    samples: &[ProbeSample],
    type_id: &str,
    governor: GovernorMode,
    target: Target,
) -> Result<LinearModel<f64>, PredictorError> {
    fit_with(samples, type_id, governor, target, FitOptions::default())
}

pub fn fit_with(
    samples: &[ProbeSample],
    type_id: &str,
    governor: GovernorMode,
    target: Target,
    options: FitOptions,
) -> Result<LinearModel<f64>, PredictorError> {
    let key = model_key(type_id, governor, target);
    let selected: Vec<&ProbeSample> = samples
        .iter()
        .filter(|s| s.type_id == type_id && s.governor == governor && s.workload == options.workload)
        .collect();
    let rows: Vec<Vec<f64>> = selected.iter().map(|s| s.features()).collect();
    let y: Vec<f64> = selected.iter().map(|s| s.target(target)).collect();
    if y.iter().any(|v| !(*v > 0.0)) {
        return Err(PredictorError::NonPositiveTarget { key });
    }
    fit_ols(&rows, &y, &FEATURE_NAMES, target, options.ridge_fallback).map_err(|e| match e {
        OlsError::Underdetermined { rows, needed } => PredictorError::Underdetermined { key, rows, needed },
        OlsError::Singular => PredictorError::SingularDesign { key },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub energy_j: f64,
    pub runtime_s: f64,
}

/// All fitted models plus the training data they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSet {
    pub trained_at_s: f64,
    #[serde(default = "default_clamp")]
    pub clamp_epsilon: f64,
    pub models: BTreeMap<String, LinearModel<f64>>,
    #[serde(skip)]
    pub samples: Vec<ProbeSample>,
    #[serde(skip)]
    pub options: FitOptions,
}

fn default_clamp() -> f64 {
    DEFAULT_CLAMP
}

impl PredictorSet {
    /// Fits both targets for every (type, governor) pair present in the
    /// training workload's samples.
    pub fn train(samples: Vec<ProbeSample>, now_s: f64, options: FitOptions) -> Result<Self, PredictorError> {
        let pairs: BTreeSet<(String, GovernorMode)> = samples
            .iter()
            .filter(|s| s.workload == options.workload)
            .map(|s| (s.type_id.clone(), s.governor))
            .collect();
        let mut models = BTreeMap::new();
        for (type_id, governor) in &pairs {
            for target in Target::ALL {
                let model = fit_with(&samples, type_id, *governor, target, options)?;
                models.insert(model_key(type_id, *governor, target), model);
            }
        }
        Ok(Self { trained_at_s: now_s, clamp_epsilon: DEFAULT_CLAMP, models, samples, options })
    }

    /// Probes `cluster` and trains on the result.
    pub fn probe_and_train(cluster: &ClusterConfig, config: &ProbeConfig, seed: u64) -> Result<Self, PredictorError> {
        let samples = run_probing(cluster, config, seed)?;
        Self::train(samples, 0.0, FitOptions::default())
    }

    pub fn model(
        &self,
        type_id: &str,
        governor: GovernorMode,
        target: Target,
    ) -> Result<&LinearModel<f64>, PredictorError> {
        self.models.get(&model_key(type_id, governor, target)).ok_or_else(|| PredictorError::ModelMissing {
            type_id: type_id.to_owned(),
            governor,
            target,
        })
    }

    pub fn predict(&self, type_id: &str, governor: GovernorMode, task: &Task) -> Result<Prediction, PredictorError> {
        let features = [task.cpu_req, task.mem_req_mib as f64, task.iterations_total as f64];
        let eval = |target| -> Result<f64, PredictorError> {
            let raw = self.model(type_id, governor, target)?.evaluate(&features);
            Ok(if raw > self.clamp_epsilon { raw } else { self.clamp_epsilon })
        };
        Ok(Prediction { energy_j: eval(Target::EnergyJ)?, runtime_s: eval(Target::RuntimeS)? })
    }

    /// Largest relative error of any prediction against the ground-truth
    /// machine model over `points`, for every type and governor of `cluster`.
    pub fn max_relative_error(&self, cluster: &ClusterConfig, points: &[GridPoint]) -> Result<f64, PredictorError> {
        let mut worst = 0.0f64;
        for spec in &cluster.machines {
            for g in GovernorMode::ALL {
                for pt in points {
                    let task = Task::new("held-out", 0.0, pt.cpu_req, pt.mem_req_mib, pt.iterations);
                    let p = self.predict(&spec.type_id, g, &task)?;
                    let iters = pt.iterations as f64;
                    let rt = spec.runtime_s(g, iters);
                    let en = spec.task_energy_j(g, iters);
                    worst = worst.max((p.runtime_s - rt).abs() / rt).max((p.energy_j - en).abs() / en);
                }
            }
        }
        Ok(worst)
    }

    /// True when every machine type of `cluster` has both targets under both
    /// governors.
    pub fn covers(&self, cluster: &ClusterConfig) -> bool {
        cluster.machines.iter().all(|m| {
            GovernorMode::ALL
                .iter()
                .all(|&g| Target::ALL.iter().all(|&t| self.models.contains_key(&model_key(&m.type_id, g, t))))
        })
    }

    /// Refits on old plus new samples once `period_s` has elapsed since the
    /// last fit; otherwise returns an unchanged copy.
    pub fn maybe_refresh(
        &self,
        now_s: f64,
        new_samples: &[ProbeSample],
        period_s: f64,
    ) -> Result<Self, PredictorError> {
        if !(period_s > 0.0) {
            return Err(PredictorError::InvalidPeriod(period_s));
        }
        if now_s - self.trained_at_s < period_s {
            return Ok(self.clone());
        }
        let mut samples = self.samples.clone();
        samples.extend_from_slice(new_samples);
        let mut refreshed = Self::train(samples, now_s, self.options)?;
        refreshed.clamp_epsilon = self.clamp_epsilon;
        Ok(refreshed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("predictor set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PredictorError> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn write_samples_csv<W: io::Write>(writer: W, samples: &[ProbeSample]) -> Result<(), PredictorError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    for s in samples {
        w.serialize(s)?;
    }
    if samples.is_empty() {
        w.write_record([
            "type_id",
            "governor",
            "workload",
            "cpu_req",
            "mem_req_mib",
            "iterations",
            "measured_runtime_s",
            "measured_energy_j",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<ProbeSample>, PredictorError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<ProbeSample>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterConfig;

    fn one_type_cluster() -> ClusterConfig {
        let mut c = ClusterConfig::default_testbed();
        c.machines.truncate(1);
        c.nodes.retain(|n| n.type_id == c.machines[0].type_id);
        c
    }

    #[test]
    fn zero_noise_single_point_single_governor() {
        let cluster = one_type_cluster();
        let cfg = ProbeConfig {
            grid: vec![GridPoint { cpu_req: 2.0, mem_req_mib: 512, iterations: 690 }],
            noise_sd_rel: 0.0,
            matmul_factor: 1.7,
        };
        let samples: Vec<_> = run_probing(&cluster, &cfg, 1)
            .unwrap()
            .into_iter()
            .filter(|s| s.governor == GovernorMode::Performance)
            .collect();
        assert_eq!(samples.len(), 2);
        let spec = &cluster.machines[0];
        let km = &samples[0];
        assert_eq!(km.workload, Workload::KMeansLike);
        assert_eq!(km.measured_runtime_s, spec.runtime_s(GovernorMode::Performance, 690.0));
        assert_eq!(km.measured_energy_j, spec.task_energy_j(GovernorMode::Performance, 690.0));
        let mm = &samples[1];
        assert_eq!(mm.workload, Workload::MatMulLike);
        assert!((mm.measured_runtime_s / km.measured_runtime_s - 1.7).abs() < 1e-12);
    }

    #[test]
    fn sample_count_is_cardinality_product() {
        let cluster = ClusterConfig::default_testbed();
        let mut cfg = ProbeConfig::with_noise(0.05);
        cfg.grid.truncate(5);
        assert_eq!(run_probing(&cluster, &cfg, 3).unwrap().len(), 4 * 2 * 2 * 5);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let cfg = ProbeConfig { grid: vec![], noise_sd_rel: 0.0, matmul_factor: 1.7 };
        assert!(matches!(run_probing(&ClusterConfig::default_testbed(), &cfg, 0), Err(PredictorError::EmptyProbeGrid)));
    }

    #[test]
    fn probing_is_deterministic_per_seed() {
        let cluster = ClusterConfig::default_testbed();
        let cfg = ProbeConfig::with_noise(0.05);
        let a = run_probing(&cluster, &cfg, 11).unwrap();
        let b = run_probing(&cluster, &cfg, 11).unwrap();
        let c = run_probing(&cluster, &cfg, 12).unwrap();
        let to_bytes = |s: &[ProbeSample]| {
            let mut buf = Vec::new();
            write_samples_csv(&mut buf, s).unwrap();
            buf
        };
        assert_eq!(to_bytes(&a), to_bytes(&b));
        assert_ne!(to_bytes(&a), to_bytes(&c));
    }

    #[test]
    fn powersave_is_never_faster_in_probe_data() {
        let samples = run_probing(&ClusterConfig::default_testbed(), &ProbeConfig::with_noise(0.0), 5).unwrap();
        for ps in samples.iter().filter(|s| s.governor == GovernorMode::Powersave) {
            let perf = samples
                .iter()
                .find(|s| {
                    s.governor == GovernorMode::Performance
                        && s.type_id == ps.type_id
                        && s.workload == ps.workload
                        && s.iterations == ps.iterations
                        && s.cpu_req == ps.cpu_req
                        && s.mem_req_mib == ps.mem_req_mib
                })
                .unwrap();
            assert!(ps.measured_runtime_s >= perf.measured_runtime_s);
        }
    }

    #[test]
    fn intercept_only_model_predicts_constant() {
        let mut set = PredictorSet {
            trained_at_s: 0.0,
            clamp_epsilon: DEFAULT_CLAMP,
            models: BTreeMap::new(),
            samples: vec![],
            options: FitOptions::default(),
        };
        let g = GovernorMode::Performance;
        set.models
            .insert(model_key("m", g, Target::EnergyJ), LinearModel::constant(Target::EnergyJ, &FEATURE_NAMES, 5.0));
        set.models
            .insert(model_key("m", g, Target::RuntimeS), LinearModel::constant(Target::RuntimeS, &FEATURE_NAMES, -3.0));
        let p = set.predict("m", g, &Task::new("t", 0.0, 2.0, 512, 900)).unwrap();
        assert_eq!(p.energy_j, 5.0);
        assert_eq!(p.runtime_s, DEFAULT_CLAMP);
        assert!(matches!(
            set.predict("m", GovernorMode::Powersave, &Task::new("t", 0.0, 2.0, 512, 900)),
            Err(PredictorError::ModelMissing { .. })
        ));
    }

    #[test]
    fn noiseless_training_matches_ground_truth_on_held_out_points() {
        let cluster = ClusterConfig::default_testbed();
        let set = PredictorSet::probe_and_train(&cluster, &ProbeConfig::with_noise(0.0), 9).unwrap();
        assert!(set.covers(&cluster));
        for spec in &cluster.machines {
            for g in GovernorMode::ALL {
                for (cpu, mem, it) in [(3.0, 384, 620), (1.5, 300, 987), (2.0, 512, 501)] {
                    let task = Task::new("h", 0.0, cpu, mem, it);
                    let p = set.predict(&spec.type_id, g, &task).unwrap();
                    let rt = spec.runtime_s(g, it as f64);
                    let en = spec.task_energy_j(g, it as f64);
                    assert!((p.runtime_s - rt).abs() / rt <= 1e-6, "{} {g} runtime", spec.type_id);
                    assert!((p.energy_j - en).abs() / en <= 1e-6, "{} {g} energy", spec.type_id);
                }
            }
        }
    }

    #[test]
    fn fit_reports_underdetermined_and_singular() {
        let samples = run_probing(&ClusterConfig::default_testbed(), &ProbeConfig::with_noise(0.0), 1).unwrap();
        let few: Vec<_> = samples.iter().take(3).cloned().collect();
        let ty = few[0].type_id.clone();
        assert!(matches!(
            fit(&few, &ty, few[0].governor, Target::RuntimeS),
            Err(PredictorError::Underdetermined { .. })
        ));
        let same: Vec<_> = std::iter::repeat_n(samples[0].clone(), 8).collect();
        let opts = FitOptions { ridge_fallback: false, ..FitOptions::default() };
        assert!(matches!(
            fit_with(&same, &ty, same[0].governor, Target::RuntimeS, opts),
            Err(PredictorError::SingularDesign { .. })
        ));
    }

    #[test]
    fn refresh_respects_period() {
        let cluster = ClusterConfig::default_testbed();
        let samples = run_probing(&cluster, &ProbeConfig::with_noise(0.05), 2).unwrap();
        let set = PredictorSet::train(samples.clone(), 0.0, FitOptions::default()).unwrap();

        let early = set.maybe_refresh(86_399.0, &samples, DEFAULT_LEARNING_PERIOD_S).unwrap();
        assert_eq!(early, set);

        let refreshed = set.maybe_refresh(86_400.0, &[], DEFAULT_LEARNING_PERIOD_S).unwrap();
        assert_eq!(refreshed.trained_at_s, 86_400.0);
        for (key, model) in &set.models {
            let other = &refreshed.models[key];
            for (a, b) in model.coefficients.iter().zip(&other.coefficients) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{key}");
            }
        }

        let more = run_probing(&cluster, &ProbeConfig::with_noise(0.05), 3).unwrap();
        let grown = set.maybe_refresh(90_000.0, &more, DEFAULT_LEARNING_PERIOD_S).unwrap();
        assert_eq!(grown.samples.len(), samples.len() + more.len());
        assert!(set.maybe_refresh(1.0, &[], 0.0).is_err());
    }

    #[test]
    fn samples_csv_round_trip_and_header() {
        let samples = run_probing(&one_type_cluster(), &ProbeConfig::with_noise(0.1), 4).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "type_id,governor,workload,cpu_req,mem_req_mib,iterations,measured_runtime_s,measured_energy_j\n"
        ));
        assert!(!text.contains('\r'));
        let dir = std::env::temp_dir().join(format!("probe-{}.csv", std::process::id()));
        std::fs::write(&dir, &text).unwrap();
        let back = read_samples_csv(&dir).unwrap();
        std::fs::remove_file(&dir).ok();
        assert_eq!(back, samples);
    }

    #[test]
    fn models_json_is_keyed_by_type_governor_target() {
        let set =
            PredictorSet::probe_and_train(&ClusterConfig::default_testbed(), &ProbeConfig::with_noise(0.0), 1).unwrap();
        let json = set.to_json();
        assert!(json.contains("\"amd-epyc-7281:performance:energy_j\""));
        assert!(json.contains("\"arm-cortex-a53:powersave:runtime_s\""));
        let back = PredictorSet::from_json(&json).unwrap();
        assert_eq!(back.models, set.models);
    }
}
