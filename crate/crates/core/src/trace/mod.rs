//! Workload traces: a synthetic burst generator and a sampler over a
//! normalized cluster-event format.

mod sample;
mod synthetic;

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sample::{
    eligible_machines, extract_window, filter_by_users, fold_machines, machine_inventory, map_machine_types, sample,
    tasks_from_trace, top_users, FoldMapping, SampleParams, Sampled, TaskDefaults, Window,
};
pub use synthetic::{generate_synthetic, read_tasks_csv, write_tasks_csv, SyntheticParams};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("UnevenBursts: {n_jobs} jobs cannot be split evenly into {bursts} bursts")]
    UnevenBursts { n_jobs: usize, bursts: usize },
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error("NotBijective: machine types {0} and {1} map to the same target")]
    NotBijective(String, String),
    #[error("UnmappedType({0})")]
    UnmappedType(String),
    #[error("NoTargetNode({0})")]
    NoTargetNode(String),
    #[error("machine {0} is referenced by task events but has no type")]
    UntypedMachine(String),
    #[error("IncompleteRecord: submit of task {0} lacks usable resource fields")]
    IncompleteRecord(String),
    #[error("testbed has no machines")]
    EmptyTestbed,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Submit,
    Schedule,
    Finish,
    Evict,
    MachineAdd,
    MachineRemove,
    MachineUpdate,
    Usage,
}

impl TraceKind {
    pub fn is_machine_event(self) -> bool {
        matches!(self, TraceKind::MachineAdd | TraceKind::MachineRemove | TraceKind::MachineUpdate)
    }
}

/// One row of a normalized trace. Absent fields are empty strings or
/// `None`; resource requests are fractions of the largest machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time_s: f64,
    pub kind: TraceKind,
    pub user_id: String,
    pub task_id: String,
    pub machine_id: String,
    pub machine_type: String,
    pub cpu_req: Option<f64>,
    pub mem_req: Option<f64>,
}

impl TraceEvent {
    pub fn task(time_s: f64, kind: TraceKind, user_id: &str, task_id: &str, machine_id: &str) -> Self {
        Self {
            time_s,
            kind,
            user_id: user_id.to_owned(),
            task_id: task_id.to_owned(),
            machine_id: machine_id.to_owned(),
            machine_type: String::new(),
            cpu_req: None,
            mem_req: None,
        }
    }

    pub fn submit(time_s: f64, user_id: &str, task_id: &str, cpu_req: f64, mem_req: f64) -> Self {
        Self {
            cpu_req: Some(cpu_req),
            mem_req: Some(mem_req),
            ..Self::task(time_s, TraceKind::Submit, user_id, task_id, "")
        }
    }

    pub fn machine(time_s: f64, kind: TraceKind, machine_id: &str, machine_type: &str) -> Self {
        Self { machine_type: machine_type.to_owned(), ..Self::task(time_s, kind, "", "", machine_id) }
    }
}

pub fn read_trace_csv<R: io::Read>(reader: R) -> Result<Vec<TraceEvent>, TraceError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_trace_csv<W: io::Write>(writer: W, events: &[TraceEvent]) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    if events.is_empty() {
        w.write_record(["time_s", "kind", "user_id", "task_id", "machine_id", "machine_type", "cpu_req", "mem_req"])?;
    }
    for e in events {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}
