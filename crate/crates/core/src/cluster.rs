//! Machines, nodes, tasks and trade-off weights.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{MigrationScenario, REFERENCE_PER_ITERATION_S};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("invalid machine spec {type_id}: {reason}")]
    InvalidSpec { type_id: String, reason: String },
    #[error("node {node_id} references unknown machine type {type_id}")]
    UnknownType { node_id: NodeId, type_id: String },
    #[error("duplicate {what} id {id}")]
    Duplicate { what: &'static str, id: String },
    #[error("trade-off weights must lie in [0,1] and sum to 1, got e_w={e_w}, p_w={p_w}")]
    InvalidWeights { e_w: f64, p_w: f64 },
    #[error("node {node_id} cannot host task {task_id}")]
    InsufficientCapacity { node_id: NodeId, task_id: TaskId },
    #[error("task {task_id} is not running on node {node_id}")]
    NotResident { node_id: NodeId, task_id: TaskId },
    #[error("cluster config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cluster config: {0}")]
    Json(#[from] serde_json::Error),
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(NodeId);
string_id!(TaskId);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GovernorMode {
    Powersave,
    #[default]
    Performance,
}

impl GovernorMode {
    pub const ALL: [GovernorMode; 2] = [GovernorMode::Powersave, GovernorMode::Performance];

    pub fn as_str(self) -> &'static str {
        match self {
            GovernorMode::Powersave => "powersave",
            GovernorMode::Performance => "performance",
        }
    }
}

impl fmt::Display for GovernorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GovernorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "powersave" => Ok(GovernorMode::Powersave),
            "performance" => Ok(GovernorMode::Performance),
            other => Err(format!("unknown governor {other:?}")),
        }
    }
}

/// A value per governor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerGovernor {
    pub powersave: f64,
    pub performance: f64,
}

impl PerGovernor {
    pub fn get(&self, g: GovernorMode) -> f64 {
        match g {
            GovernorMode::Powersave => self.powersave,
            GovernorMode::Performance => self.performance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub type_id: String,
    pub arch: String,
    pub cores: u32,
    pub frequency_ghz: f64,
    pub tdp_w: f64,
    pub mem_mib: u64,
    pub idle_power_w: f64,
    /// Seconds per work unit for one task.
    pub per_iteration_s: PerGovernor,
    /// Power drawn by one running task, idle excluded.
    pub active_power_w: PerGovernor,
}

impl MachineSpec {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |reason: &str| ClusterError::InvalidSpec { type_id: self.type_id.clone(), reason: reason.to_owned() };
        if self.cores == 0 || self.mem_mib == 0 {
            return Err(bad("cores and mem_mib must be positive"));
        }
        if !(self.frequency_ghz > 0.0) || !(self.tdp_w > 0.0) {
            return Err(bad("frequency_ghz and tdp_w must be positive"));
        }
        if !(self.idle_power_w >= 0.0) {
            return Err(bad("idle_power_w must be non-negative"));
        }
        for g in GovernorMode::ALL {
            if !(self.per_iteration_s.get(g) > 0.0) || !(self.active_power_w.get(g) > 0.0) {
                return Err(bad("per-governor timing and power must be positive"));
            }
            if self.active_power_w.get(g) > self.tdp_w {
                return Err(bad("active power exceeds TDP"));
            }
        }
        if self.per_iteration_s.powersave < self.per_iteration_s.performance {
            return Err(bad("powersave must not be faster than performance"));
        }
        if self.active_power_w.powersave > self.active_power_w.performance {
            return Err(bad("powersave must not draw more power than performance"));
        }
        Ok(())
    }

    pub fn runtime_s(&self, governor: GovernorMode, iterations: f64) -> f64 {
        iterations * self.per_iteration_s.get(governor)
    }

    pub fn task_energy_j(&self, governor: GovernorMode, iterations: f64) -> f64 {
        self.active_power_w.get(governor) * self.runtime_s(governor, iterations)
    }
}

/// Node entry of the cluster configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub node_id: NodeId,
    pub type_id: String,
    #[serde(default)]
    pub governor: GovernorMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub machines: Vec<MachineSpec>,
    pub nodes: Vec<NodeConfig>,
}

impl ClusterConfig {
    pub fn load(path: &Path) -> Result<Self, ClusterError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ClusterConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cluster config serializes")
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let mut types = BTreeMap::new();
        for m in &self.machines {
            m.validate()?;
            if types.insert(m.type_id.as_str(), m).is_some() {
                return Err(ClusterError::Duplicate { what: "machine type", id: m.type_id.clone() });
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &self.nodes {
            if !types.contains_key(n.type_id.as_str()) {
                return Err(ClusterError::UnknownType { node_id: n.node_id.clone(), type_id: n.type_id.clone() });
            }
            if !seen.insert(&n.node_id) {
                return Err(ClusterError::Duplicate { what: "node", id: n.node_id.0.clone() });
            }
        }
        Ok(())
    }

    pub fn machine(&self, type_id: &str) -> Option<&MachineSpec> {
        self.machines.iter().find(|m| m.type_id == type_id)
    }

    /// Fresh, empty node instances sorted by node id.
    pub fn instantiate(&self) -> Result<Vec<Node>, ClusterError> {
        self.validate()?;
        let specs: BTreeMap<&str, Arc<MachineSpec>> =
            self.machines.iter().map(|m| (m.type_id.as_str(), Arc::new(m.clone()))).collect();
        let mut nodes: Vec<Node> = self
            .nodes
            .iter()
            .map(|n| Node::new(n.node_id.clone(), specs[n.type_id.as_str()].clone(), n.governor))
            .collect();
        nodes.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        Ok(nodes)
    }

    /// The machine with the most cores (then most memory, then smallest
    /// type id) among the types that have at least one node.
    pub fn reference_machine(&self) -> Option<&MachineSpec> {
        self.machines
            .iter()
            .filter(|m| self.nodes.iter().any(|n| n.type_id == m.type_id))
            .max_by(|a, b| a.cores.cmp(&b.cores).then(a.mem_mib.cmp(&b.mem_mib)).then(b.type_id.cmp(&a.type_id)))
    }

    /// The eight-worker heterogeneous testbed: one AMD, three Intel (one
    /// E3, two E5) and four ARM boards, all under the performance governor.
    ///
    /// AMD and ARM task constants come from [`MigrationScenario`]; the Intel
    /// figures and all powersave figures are configuration defaults.
    pub fn default_testbed() -> Self {
        let cal = MigrationScenario::default().solve();
        let amd_iter = REFERENCE_PER_ITERATION_S;
        let arm_iter = REFERENCE_PER_ITERATION_S * cal.target_slowdown;
        let server =
            |type_id: &str, arch: &str, cores, ghz, tdp: f64, mem_gib: u64, iter_s: f64, power: f64| MachineSpec {
                type_id: type_id.to_owned(),
                arch: arch.to_owned(),
                cores,
                frequency_ghz: ghz,
                tdp_w: tdp,
                mem_mib: mem_gib * 1024,
                idle_power_w: 0.35 * tdp,
                per_iteration_s: PerGovernor { powersave: iter_s * 1.6, performance: iter_s },
                active_power_w: PerGovernor { powersave: power * 0.55, performance: power },
            };
        let machines = vec![
            server("amd-epyc-7281", "amd64", 32, 2.1, 155.0, 64, amd_iter, cal.source_power_w),
            server("intel-xeon-e3-1270v6", "x86", 4, 3.8, 72.0, 64, 0.065, 19.0),
            server("intel-xeon-e5-2683v4", "x86", 32, 2.1, 120.0, 128, 0.12, 4.5),
            MachineSpec {
                type_id: "arm-cortex-a53".to_owned(),
                arch: "big.LITTLE".to_owned(),
                cores: 4,
                frequency_ghz: 1.4,
                tdp_w: 5.0,
                mem_mib: 1024,
                idle_power_w: 2.5,
                per_iteration_s: PerGovernor { powersave: arm_iter * 2.0, performance: arm_iter },
                active_power_w: PerGovernor { powersave: cal.target_power_w * 0.6, performance: cal.target_power_w },
            },
        ];
        let node = |id: &str, ty: &str| NodeConfig {
            node_id: id.into(),
            type_id: ty.to_owned(),
            governor: GovernorMode::Performance,
        };
        let nodes = vec![
            node("amd-0", "amd-epyc-7281"),
            node("arm-0", "arm-cortex-a53"),
            node("arm-1", "arm-cortex-a53"),
            node("arm-2", "arm-cortex-a53"),
            node("arm-3", "arm-cortex-a53"),
            node("intel-e3-0", "intel-xeon-e3-1270v6"),
            node("intel-e5-0", "intel-xeon-e5-2683v4"),
            node("intel-e5-1", "intel-xeon-e5-2683v4"),
        ];
        ClusterConfig { machines, nodes }
    }

    /// One AMD node and one ARM node, for the single-task migration scenario.
    pub fn migration_pair() -> Self {
        let full = Self::default_testbed();
        let machines: Vec<MachineSpec> = full
            .machines
            .iter()
            .filter(|m| m.type_id == "amd-epyc-7281" || m.type_id == "arm-cortex-a53")
            .cloned()
            .collect();
        let nodes =
            full.nodes.into_iter().filter(|n| n.node_id.as_str() == "amd-0" || n.node_id.as_str() == "arm-0").collect();
        ClusterConfig { machines, nodes }
    }
}

/// Energy/performance preference of a task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffWeights {
    e_w: f64,
    p_w: f64,
}

impl TradeoffWeights {
    pub fn new(e_w: f64, p_w: f64) -> Result<Self, ClusterError> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(e_w) || !in_unit(p_w) || (e_w + p_w - 1.0).abs() > 1e-9 {
            return Err(ClusterError::InvalidWeights { e_w, p_w });
        }
        Ok(Self { e_w, p_w })
    }

    /// `e_w = h`, `p_w = 1 - h`; `h = 1` is the most energy-efficient setting.
    pub fn from_h(h: f64) -> Result<Self, ClusterError> {
        if !(0.0..=1.0).contains(&h) {
            return Err(ClusterError::InvalidWeights { e_w: h, p_w: 1.0 - h });
        }
        Ok(Self { e_w: h, p_w: 1.0 - h })
    }

    pub fn energy(&self) -> f64 {
        self.e_w
    }

    pub fn performance(&self) -> f64 {
        self.p_w
    }
}

impl Default for TradeoffWeights {
    fn default() -> Self {
        Self { e_w: 0.5, p_w: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskState {
    Pending,
    Running,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: TaskId,
    pub user_id: String,
    pub submit_time_s: f64,
    pub cpu_req: f64,
    pub mem_req_mib: u64,
    pub iterations_total: u64,
    /// Completed work in fractional work units.
    pub work_done: f64,
    pub weights: TradeoffWeights,
    pub state: TaskState,
    pub current_node: Option<NodeId>,
    pub energy_j: f64,
}

impl Task {
    pub fn new(
        task_id: impl Into<TaskId>,
        submit_time_s: f64,
        cpu_req: f64,
        mem_req_mib: u64,
        iterations_total: u64,
    ) -> Self {
        Self {
            task_id: task_id.into(),
            user_id: String::new(),
            submit_time_s,
            cpu_req,
            mem_req_mib,
            iterations_total,
            work_done: 0.0,
            weights: TradeoffWeights::default(),
            state: TaskState::Pending,
            current_node: None,
            energy_j: 0.0,
        }
    }

    pub fn with_weights(mut self, weights: TradeoffWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_user(mut self, user_id: impl Into<String>) -> Self {
        self.user_id = user_id.into();
        self
    }

    /// Whole iterations completed so far.
    pub fn iterations_done(&self) -> u64 {
        if self.state == TaskState::Finished {
            self.iterations_total
        } else {
            (self.work_done.floor() as u64).min(self.iterations_total)
        }
    }

    pub fn remaining_work(&self) -> f64 {
        (self.iterations_total as f64 - self.work_done).max(0.0)
    }

    pub fn demand(&self) -> Demand {
        Demand { cores: self.cpu_req, mem_mib: self.mem_req_mib }
    }
}

/// Resources held by one task on a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub cores: f64,
    pub mem_mib: u64,
}

/// A live machine instance with its resource ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub node_id: NodeId,
    pub spec: Arc<MachineSpec>,
    pub governor: GovernorMode,
    allocated_cores: f64,
    allocated_mem_mib: u64,
    running: BTreeMap<TaskId, Demand>,
}

impl Node {
    pub fn new(node_id: NodeId, spec: Arc<MachineSpec>, governor: GovernorMode) -> Self {
        Self { node_id, spec, governor, allocated_cores: 0.0, allocated_mem_mib: 0, running: BTreeMap::new() }
    }

    pub fn allocated_cores(&self) -> f64 {
        self.allocated_cores
    }

    pub fn allocated_mem_mib(&self) -> u64 {
        self.allocated_mem_mib
    }

    pub fn running_tasks(&self) -> impl Iterator<Item = &TaskId> {
        self.running.keys()
    }

    pub fn hosts(&self, task_id: &TaskId) -> bool {
        self.running.contains_key(task_id)
    }

    pub fn free_resources(&self) -> (f64, u64) {
        (f64::from(self.spec.cores) - self.allocated_cores, self.spec.mem_mib.saturating_sub(self.allocated_mem_mib))
    }

    /// Inclusive capacity check: a request equal to what is free fits.
    pub fn fits_demand(&self, demand: Demand) -> bool {
        let (cores, mem) = self.free_resources();
        demand.cores <= cores && demand.mem_mib <= mem
    }

    pub fn fits(&self, task: &Task) -> bool {
        self.fits_demand(task.demand())
    }

    pub fn allocate(&mut self, task_id: &TaskId, demand: Demand) -> Result<(), ClusterError> {
        if self.running.contains_key(task_id) || !self.fits_demand(demand) {
            return Err(ClusterError::InsufficientCapacity { node_id: self.node_id.clone(), task_id: task_id.clone() });
        }
        self.running.insert(task_id.clone(), demand);
        self.recompute();
        Ok(())
    }

    pub fn release(&mut self, task_id: &TaskId) -> Result<Demand, ClusterError> {
        let demand = self
            .running
            .remove(task_id)
            .ok_or_else(|| ClusterError::NotResident { node_id: self.node_id.clone(), task_id: task_id.clone() })?;
        self.recompute();
        Ok(demand)
    }

    // Allocations are re-summed from the resident set so they always equal
    // the sum of resident demands, with no drift from repeated add/subtract.
    fn recompute(&mut self) {
        self.allocated_cores = self.running.values().map(|d| d.cores).sum();
        self.allocated_mem_mib = self.running.values().map(|d| d.mem_mib).sum();
    }

    pub fn within_capacity(&self) -> bool {
        self.allocated_cores <= f64::from(self.spec.cores) && self.allocated_mem_mib <= self.spec.mem_mib
    }

    pub fn cpu_fraction(&self) -> f64 {
        self.allocated_cores / f64::from(self.spec.cores)
    }

    pub fn mem_fraction(&self) -> f64 {
        self.allocated_mem_mib as f64 / self.spec.mem_mib as f64
    }
}

pub fn free_resources(node: &Node) -> (f64, u64) {
    node.free_resources()
}

pub fn fits(node: &Node, task: &Task) -> bool {
    node.fits(task)
}
