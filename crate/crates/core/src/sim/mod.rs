//! Discrete-event execution of a task trace on a cluster.
//!
//! Ground truth: a task with `n` iterations on machine type `m` under
//! governor `g` runs for `n · per_iteration_s[m][g]` seconds while drawing
//! `active_power_w[m][g]`. Every node additionally draws its idle power for
//! the whole run. Power is piecewise constant between events, so energy is
//! integrated in closed form.

mod energy;
mod event;
mod report;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterConfig, ClusterError, GovernorMode, MachineSpec, Node, NodeId, Task, TaskId, TaskState};
use crate::predictor::PredictorSet;
use crate::scheduler::{self, Action, Policy, SchedError};

pub use energy::{integrate_energy, InvalidTimeline, PowerSegment};
pub use event::{EventKind, EventQueue, SimEvent};
pub use report::{percentile_band, Metric, MigrationRecord, PercentileBand, SimReport, TaskOutcome, UtilizationSample};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("UnsatisfiableTask({0}): no node can host it even when empty")]
    UnsatisfiableTask(TaskId),
    #[error("duplicate task id {0} in trace")]
    DuplicateTask(TaskId),
    #[error("trace has no tasks but forced migrations reference {0}")]
    UnknownTask(TaskId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("MigrationRejected: {task} cannot move to {to}")]
    MigrationRejected { task: TaskId, to: NodeId },
    #[error("capacity violated on node {node} at t={time_s}")]
    CapacityViolation { node: NodeId, time_s: f64 },
    #[error("cluster has no nodes")]
    EmptyCluster,
    #[error(transparent)]
    Timeline(#[from] InvalidTimeline),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Scheduler(#[from] SchedError),
}

/// A migration injected at a fixed time, independent of the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedMigration {
    pub at_s: f64,
    pub task_id: TaskId,
    pub to_node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    /// Stall on the destination after each migration, seconds.
    pub migration_overhead_s: f64,
    /// Period of the pending-queue placement pass.
    pub scheduling_interval_s: f64,
    /// Period of utilization sampling.
    pub monitor_interval_s: f64,
    pub record_monitoring: bool,
    pub forced_migrations: Vec<ForcedMigration>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            migration_overhead_s: 0.0,
            scheduling_interval_s: 1.0,
            monitor_interval_s: 1.0,
            record_monitoring: true,
            forced_migrations: Vec::new(),
        }
    }
}

/// Progress of a running task over `dt_s` seconds on `spec` under
/// `governor`. Progress is capped at completion and energy only counts the
/// time actually spent working.
pub fn advance_task(task: &Task, spec: &MachineSpec, governor: GovernorMode, dt_s: f64) -> Task {
    let mut next = task.clone();
    if dt_s <= 0.0 {
        return next;
    }
    let per_iteration = spec.per_iteration_s.get(governor);
    let remaining = task.remaining_work();
    let time_to_finish = remaining * per_iteration;
    if dt_s >= time_to_finish {
        next.work_done = task.iterations_total as f64;
        next.energy_j += spec.active_power_w.get(governor) * time_to_finish;
    } else {
        next.work_done += dt_s / per_iteration;
        next.energy_j += spec.active_power_w.get(governor) * dt_s;
    }
    next
}

/// Moves a running task's reservation from `from` to `to`. The task keeps
/// its progress; timing is handled by the engine.
pub fn migrate_task(task: &mut Task, from: &mut Node, to: &mut Node) -> Result<(), SimError> {
    if from.node_id == to.node_id || !to.fits(task) || !from.hosts(&task.task_id) {
        return Err(SimError::MigrationRejected { task: task.task_id.clone(), to: to.node_id.clone() });
    }
    let demand = from.release(&task.task_id)?;
    to.allocate(&task.task_id, demand)?;
    task.current_node = Some(to.node_id.clone());
    Ok(())
}

fn pair_mut(nodes: &mut [Node], a: usize, b: usize) -> (&mut Node, &mut Node) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = nodes.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = nodes.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

struct TaskSlot {
    task: Task,
    last_update_s: f64,
    stall_until_s: f64,
    epoch: u64,
    start_s: f64,
    finish_s: f64,
    executed_work: f64,
    migrations: usize,
    last_node: Option<NodeId>,
}

struct Engine<'a> {
    nodes: Vec<Node>,
    node_index: BTreeMap<NodeId, usize>,
    slots: Vec<TaskSlot>,
    slot_index: BTreeMap<TaskId, usize>,
    pending: VecDeque<Task>,
    queue: EventQueue,
    policy: &'a Policy,
    predictors: &'a PredictorSet,
    options: &'a SimOptions,
    finished: usize,
    running: usize,
    report: SimReport,
}

impl<'a> Engine<'a> {
    fn node_of(&self, id: &NodeId) -> Result<usize, SimError> {
        self.node_index.get(id).copied().ok_or_else(|| SimError::UnknownNode(id.clone()))
    }

    /// Brings a running task's progress and energy up to `now`.
    fn sync(&mut self, i: usize, now: f64) {
        let slot = &mut self.slots[i];
        if slot.task.state != TaskState::Running {
            return;
        }
        let node = &self.nodes[self.node_index[slot.task.current_node.as_ref().unwrap()]];
        let mut t = slot.last_update_s;
        if slot.stall_until_s > t {
            let stall = slot.stall_until_s.min(now) - t;
            slot.task.energy_j += node.spec.active_power_w.get(node.governor) * stall;
            t += stall;
        }
        let before = slot.task.work_done;
        slot.task = advance_task(&slot.task, &node.spec, node.governor, now - t);
        slot.executed_work += slot.task.work_done - before;
        slot.last_update_s = now;
    }

    fn schedule_completion(&mut self, i: usize, now: f64) {
        let slot = &mut self.slots[i];
        slot.epoch += 1;
        let node = &self.nodes[self.node_index[slot.task.current_node.as_ref().unwrap()]];
        let begin = slot.stall_until_s.max(now);
        let at = begin + slot.task.remaining_work() * node.spec.per_iteration_s.get(node.governor);
        self.queue.push(at, EventKind::TaskCompletion { task: i, epoch: slot.epoch });
    }

    fn start(&mut self, i: usize, node_id: NodeId, now: f64) {
        let slot = &mut self.slots[i];
        slot.task.state = TaskState::Running;
        slot.task.current_node = Some(node_id.clone());
        slot.last_node = Some(node_id);
        slot.last_update_s = now;
        slot.stall_until_s = now;
        slot.start_s = now;
        self.running += 1;
        self.report.peak_running_tasks = self.report.peak_running_tasks.max(self.running);
        self.schedule_completion(i, now);
    }

    fn migrate(&mut self, i: usize, to: &NodeId, now: f64, forced: bool) -> Result<(), SimError> {
        let from = self.slots[i].task.current_node.clone().expect("running task has a host");
        let (fi, ti) = (self.node_of(&from)?, self.node_of(to)?);
        if fi == ti {
            return Err(SimError::MigrationRejected { task: self.slots[i].task.task_id.clone(), to: to.clone() });
        }
        self.sync(i, now);
        let (src, dst) = pair_mut(&mut self.nodes, fi, ti);
        migrate_task(&mut self.slots[i].task, src, dst)?;
        let slot = &mut self.slots[i];
        slot.stall_until_s = now + self.options.migration_overhead_s;
        slot.migrations += 1;
        slot.last_node = Some(to.clone());
        self.report.migrations += 1;
        self.report.migration_log.push(MigrationRecord {
            time_s: now,
            task_id: slot.task.task_id.clone(),
            from_node: from,
            to_node: to.clone(),
            forced,
        });
        self.schedule_completion(i, now);
        Ok(())
    }

    fn complete(&mut self, i: usize, now: f64) -> Result<(), SimError> {
        self.sync(i, now);
        let slot = &mut self.slots[i];
        let host = slot.task.current_node.take().expect("running task has a host");
        // Closed-form completion times can land a rounding error short of
        // the last unit of work.
        slot.executed_work += slot.task.remaining_work();
        slot.task.work_done = slot.task.iterations_total as f64;
        slot.task.state = TaskState::Finished;
        slot.finish_s = now;
        let id = slot.task.task_id.clone();
        let ni = self.node_of(&host)?;
        self.nodes[ni].release(&id)?;
        self.running -= 1;
        self.finished += 1;
        self.report.makespan_s = self.report.makespan_s.max(now);
        Ok(())
    }

    fn running_tasks(&self) -> Vec<Task> {
        self.slots.iter().filter(|s| s.task.state == TaskState::Running).map(|s| s.task.clone()).collect()
    }

    fn monitor(&mut self, now: f64) {
        let mut cpu = Vec::with_capacity(self.nodes.len());
        let mut mem = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let sample = UtilizationSample {
                time_s: now,
                node_id: n.node_id.clone(),
                cpu_frac: n.cpu_fraction(),
                mem_frac: n.mem_fraction(),
            };
            cpu.push(sample.cpu_frac);
            mem.push(sample.mem_frac);
            self.report.utilization_series.push(sample);
        }
        self.report.percentile_bands.push(PercentileBand {
            time_s: now,
            metric: Metric::Cpu,
            values: percentile_band(&cpu),
        });
        self.report.percentile_bands.push(PercentileBand {
            time_s: now,
            metric: Metric::Mem,
            values: percentile_band(&mem),
        });
    }

    fn check_capacity(&self, now: f64) -> Result<(), SimError> {
        match self.nodes.iter().find(|n| !n.within_capacity()) {
            Some(n) => Err(SimError::CapacityViolation { node: n.node_id.clone(), time_s: now }),
            None => Ok(()),
        }
    }

    fn done(&self) -> bool {
        self.finished == self.slots.len()
    }

    fn handle(&mut self, ev: SimEvent) -> Result<(), SimError> {
        let now = ev.time_s;
        match ev.kind {
            EventKind::TaskCompletion { task, epoch } => {
                if self.slots[task].epoch == epoch && self.slots[task].task.state == TaskState::Running {
                    self.complete(task, now)?;
                }
            }
            EventKind::TaskArrival { task } => {
                let t = &self.slots[task].task;
                let empty_fit =
                    self.nodes.iter().any(|n| t.cpu_req <= f64::from(n.spec.cores) && t.mem_req_mib <= n.spec.mem_mib);
                if !empty_fit {
                    return Err(SimError::UnsatisfiableTask(t.task_id.clone()));
                }
                self.pending.push_back(t.clone());
            }
            EventKind::SchedulingTick { tick } => {
                if !self.pending.is_empty() {
                    let decisions =
                        scheduler::schedule(&mut self.pending, &mut self.nodes, self.predictors, self.policy, now)?;
                    for d in decisions {
                        match &d.action {
                            Action::Assign(node) => {
                                let i = self.slot_index[&d.task_id];
                                self.start(i, node.clone(), now);
                                self.report.decisions.push(d);
                            }
                            Action::Defer => self.report.deferrals += 1,
                            Action::Migrate { .. } => unreachable!("placement pass never migrates"),
                        }
                    }
                }
                if !self.done() {
                    let next = tick + 1;
                    self.queue.push(
                        next as f64 * self.options.scheduling_interval_s,
                        EventKind::SchedulingTick { tick: next },
                    );
                }
            }
            EventKind::RescheduleTick { tick } => {
                let running = self.running_tasks();
                if !running.is_empty() {
                    let decisions = scheduler::reschedule(&running, &self.nodes, self.predictors, self.policy, now)?;
                    for d in decisions {
                        if let Action::Migrate { to, .. } = &d.action {
                            let i = self.slot_index[&d.task_id];
                            self.migrate(i, to, now, false)?;
                            self.report.decisions.push(d);
                        }
                    }
                }
                if !self.done() {
                    let interval = self.policy.reschedule_interval_s().expect("policy reschedules");
                    let next = tick + 1;
                    self.queue.push(next as f64 * interval, EventKind::RescheduleTick { tick: next });
                }
            }
            EventKind::ForcedMigration { task, to } => {
                let slot = &self.slots[task];
                if slot.task.state == TaskState::Running && slot.task.current_node.as_ref() != Some(&to) {
                    match self.migrate(task, &to, now, true) {
                        Ok(()) => {}
                        Err(SimError::MigrationRejected { .. }) => self.report.rejected_migrations += 1,
                        Err(e) => return Err(e),
                    }
                } else {
                    self.report.rejected_migrations += 1;
                }
            }
            EventKind::MonitorTick { tick } => {
                if self.options.record_monitoring {
                    self.monitor(now);
                }
                if !self.done() && self.options.record_monitoring {
                    let next = tick + 1;
                    self.queue
                        .push(next as f64 * self.options.monitor_interval_s, EventKind::MonitorTick { tick: next });
                }
            }
        }
        self.check_capacity(now)
    }
}

/// Runs `trace` to completion on a fresh instance of `cluster`.
///
/// Tasks are sorted by submit time (stable) and reset to pending. For the
/// energy-aware policy every task's weights are set from the policy's H
/// value. The run is a pure function of its inputs.
pub fn run(
    cluster: &ClusterConfig,
    trace: &[Task],
    policy: &Policy,
    predictors: &PredictorSet,
    options: &SimOptions,
) -> Result<SimReport, SimError> {
    let nodes = cluster.instantiate()?;
    if nodes.is_empty() {
        return Err(SimError::EmptyCluster);
    }
    let weights = policy.weights()?;
    let mut tasks: Vec<Task> = trace.to_vec();
    tasks.sort_by(|a, b| a.submit_time_s.total_cmp(&b.submit_time_s));

    let mut slot_index = BTreeMap::new();
    let mut slots = Vec::with_capacity(tasks.len());
    for (i, mut t) in tasks.into_iter().enumerate() {
        if slot_index.insert(t.task_id.clone(), i).is_some() {
            return Err(SimError::DuplicateTask(t.task_id));
        }
        t.state = TaskState::Pending;
        t.current_node = None;
        t.work_done = 0.0;
        t.energy_j = 0.0;
        if let Some(w) = weights {
            t.weights = w;
        }
        slots.push(TaskSlot {
            task: t,
            last_update_s: 0.0,
            stall_until_s: 0.0,
            epoch: 0,
            start_s: 0.0,
            finish_s: 0.0,
            executed_work: 0.0,
            migrations: 0,
            last_node: None,
        });
    }
    let node_index = nodes.iter().enumerate().map(|(i, n)| (n.node_id.clone(), i)).collect();

    let mut engine = Engine {
        nodes,
        node_index,
        slots,
        slot_index,
        pending: VecDeque::new(),
        queue: EventQueue::default(),
        policy,
        predictors,
        options,
        finished: 0,
        running: 0,
        report: SimReport::empty(),
    };
    if engine.slots.is_empty() {
        return Ok(engine.report);
    }

    for (i, s) in engine.slots.iter().enumerate() {
        engine.queue.push(s.task.submit_time_s, EventKind::TaskArrival { task: i });
    }
    for fm in &options.forced_migrations {
        let i = *engine.slot_index.get(&fm.task_id).ok_or_else(|| SimError::UnknownTask(fm.task_id.clone()))?;
        engine.node_of(&fm.to_node)?;
        engine.queue.push(fm.at_s, EventKind::ForcedMigration { task: i, to: fm.to_node.clone() });
    }
    engine.queue.push(0.0, EventKind::SchedulingTick { tick: 0 });
    if let Some(interval) = policy.reschedule_interval_s() {
        engine.queue.push(interval, EventKind::RescheduleTick { tick: 1 });
    }
    if options.record_monitoring {
        engine.queue.push(0.0, EventKind::MonitorTick { tick: 0 });
    }

    while !engine.done() {
        let ev = engine.queue.pop().expect("events remain while tasks are unfinished");
        engine.handle(ev)?;
    }

    let makespan = engine.report.makespan_s;
    let idle: Vec<PowerSegment<f64>> =
        engine.nodes.iter().map(|n| PowerSegment { power_w: n.spec.idle_power_w, duration_s: makespan }).collect();
    let idle_j = integrate_energy(&idle)?;
    let task_j: f64 = engine.slots.iter().map(|s| s.task.energy_j).sum();

    let mut report = engine.report;
    report.idle_energy_kj = idle_j / 1000.0;
    report.task_energy_kj = task_j / 1000.0;
    report.cluster_energy_kj = (idle_j + task_j) / 1000.0;
    report.tasks_finished = engine.finished;
    report.tasks = engine
        .slots
        .into_iter()
        .map(|s| TaskOutcome {
            task_id: s.task.task_id.clone(),
            submit_time_s: s.task.submit_time_s,
            start_time_s: s.start_s,
            finish_time_s: s.finish_s,
            iterations_total: s.task.iterations_total,
            iterations_done: s.task.iterations_done(),
            executed_work: s.executed_work,
            energy_j: s.task.energy_j,
            migrations: s.migrations,
            final_node: s.last_node.unwrap_or_else(|| NodeId::from("")),
        })
        .collect();
    Ok(report)
}

#[cfg(test)]
mod tests;
