use std::io;

use serde::{Deserialize, Serialize};

use crate::cluster::{NodeId, TaskId};
use crate::scheduler::SchedulingDecision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationRecord {
    pub time_s: f64,
    pub task_id: TaskId,
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationSample {
    pub time_s: f64,
    pub node_id: NodeId,
    pub cpu_frac: f64,
    pub mem_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cpu,
    Mem,
}

/// Distribution of one utilization metric across nodes at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileBand {
    pub time_s: f64,
    pub metric: Metric,
    /// p0, p25, p50, p75, p100.
    pub values: [f64; 5],
}

/// Final state of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: TaskId,
    pub submit_time_s: f64,
    pub start_time_s: f64,
    pub finish_time_s: f64,
    pub iterations_total: u64,
    pub iterations_done: u64,
    /// Sum of the work advanced on every host the task ran on.
    pub executed_work: f64,
    pub energy_j: f64,
    pub migrations: usize,
    pub final_node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub makespan_s: f64,
    /// Idle draw of every node over the whole run plus all task energy.
    pub cluster_energy_kj: f64,
    pub idle_energy_kj: f64,
    /// Task-attributed energy, idle excluded.
    pub task_energy_kj: f64,
    pub tasks_finished: usize,
    pub migrations: usize,
    pub rejected_migrations: usize,
    pub deferrals: usize,
    pub peak_running_tasks: usize,
    pub migration_log: Vec<MigrationRecord>,
    #[serde(skip)]
    pub tasks: Vec<TaskOutcome>,
    #[serde(skip)]
    pub decisions: Vec<SchedulingDecision>,
    #[serde(skip)]
    pub utilization_series: Vec<UtilizationSample>,
    #[serde(skip)]
    pub percentile_bands: Vec<PercentileBand>,
}

impl SimReport {
    pub fn empty() -> Self {
        Self {
            makespan_s: 0.0,
            cluster_energy_kj: 0.0,
            idle_energy_kj: 0.0,
            task_energy_kj: 0.0,
            tasks_finished: 0,
            migrations: 0,
            rejected_migrations: 0,
            deferrals: 0,
            peak_running_tasks: 0,
            migration_log: Vec::new(),
            tasks: Vec::new(),
            decisions: Vec::new(),
            utilization_series: Vec::new(),
            percentile_bands: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn task(&self, id: &str) -> Option<&TaskOutcome> {
        self.tasks.iter().find(|t| t.task_id.as_str() == id)
    }

    pub fn write_utilization_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time_s,node_id,cpu_frac,mem_frac")?;
        for s in &self.utilization_series {
            writeln!(w, "{},{},{},{}", s.time_s, s.node_id, s.cpu_frac, s.mem_frac)?;
        }
        Ok(())
    }

    pub fn write_percentiles_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time_s,metric,p0,p25,p50,p75,p100")?;
        for b in &self.percentile_bands {
            let metric = match b.metric {
                Metric::Cpu => "cpu",
                Metric::Mem => "mem",
            };
            let [p0, p25, p50, p75, p100] = b.values;
            writeln!(w, "{},{metric},{p0},{p25},{p50},{p75},{p100}", b.time_s)?;
        }
        Ok(())
    }
}

/// Linearly interpolated percentiles (0, 25, 50, 75, 100) of `values`.
pub fn percentile_band(values: &[f64]) -> [f64; 5] {
    if values.is_empty() {
        return [0.0; 5];
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    };
    [at(0.0), at(0.25), at(0.5), at(0.75), at(1.0)]
}
