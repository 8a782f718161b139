use std::io;

use serde::{Deserialize, Serialize};

use super::TraceError;
use crate::cluster::Task;
use crate::rng::Rng;

/// Shape of the burst workload. Burst `b` opens at `b · horizon_s / bursts`
/// and each of its tasks arrives uniformly within `burst_window_s` of that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub n_jobs: usize,
    pub bursts: usize,
    pub horizon_s: f64,
    pub burst_window_s: f64,
    pub iter_min: u64,
    pub iter_max: u64,
    pub cpu_req: f64,
    pub mem_req_mib: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n_jobs: 480,
            bursts: 4,
            horizon_s: 600.0,
            burst_window_s: 150.0,
            iter_min: 500,
            iter_max: 1000,
            cpu_req: 2.0,
            mem_req_mib: 512,
        }
    }
}

/// Deterministic burst trace, sorted by submit time.
///
/// Each task consumes two draws in generation order: one for its offset
/// within the burst, one for its iteration count.
pub fn generate_synthetic(seed: u64, params: &SyntheticParams) -> Result<Vec<Task>, TraceError> {
    if params.bursts == 0 || !params.n_jobs.is_multiple_of(params.bursts) {
        return Err(TraceError::UnevenBursts { n_jobs: params.n_jobs, bursts: params.bursts });
    }
    if params.iter_min == 0 || params.iter_max < params.iter_min {
        return Err(TraceError::InvalidParams(format!("iterations [{}, {}]", params.iter_min, params.iter_max)));
    }
    if !(params.burst_window_s >= 0.0 && params.horizon_s >= 0.0 && params.cpu_req > 0.0) {
        return Err(TraceError::InvalidParams("negative window or non-positive cpu".to_owned()));
    }
    let per_burst = params.n_jobs / params.bursts;
    let spacing = params.horizon_s / params.bursts as f64;
    let span = params.iter_max - params.iter_min + 1;
    let width = params.n_jobs.saturating_sub(1).to_string().len().max(3);

    let mut rng = Rng::new(seed);
    let mut tasks = Vec::with_capacity(params.n_jobs);
    for b in 0..params.bursts {
        let start = b as f64 * spacing;
        for _ in 0..per_burst {
            let submit = start + rng.next_f64() * params.burst_window_s;
            let iterations = params.iter_min + u64::from(rng.next_u32()) % span;
            let id = format!("job-{:0width$}", tasks.len());
            tasks.push(Task::new(id, submit, params.cpu_req, params.mem_req_mib, iterations));
        }
    }
    tasks.sort_by(|a, b| a.submit_time_s.total_cmp(&b.submit_time_s));
    Ok(tasks)
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskRow {
    task_id: String,
    submit_time_s: f64,
    cpu_req: f64,
    mem_req_mib: u64,
    iterations: u64,
}

pub fn write_tasks_csv<W: io::Write>(writer: W, tasks: &[Task]) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    if tasks.is_empty() {
        w.write_record(["task_id", "submit_time_s", "cpu_req", "mem_req_mib", "iterations"])?;
    }
    for t in tasks {
        w.serialize(TaskRow {
            task_id: t.task_id.to_string(),
            submit_time_s: t.submit_time_s,
            cpu_req: t.cpu_req,
            mem_req_mib: t.mem_req_mib,
            iterations: t.iterations_total,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tasks_csv<R: io::Read>(reader: R) -> Result<Vec<Task>, TraceError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: TaskRow = row?;
        out.push(Task::new(row.task_id, row.submit_time_s, row.cpu_req, row.mem_req_mib, row.iterations));
    }
    Ok(out)
}
