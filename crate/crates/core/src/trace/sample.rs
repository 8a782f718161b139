use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{TraceError, TraceEvent, TraceKind};
use crate::cluster::{GovernorMode, MachineSpec, NodeConfig, NodeId, Task};

/// Half-open interval `[offset_s, offset_s + duration_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub offset_s: f64,
    pub duration_s: f64,
}

impl Window {
    pub fn everything() -> Self {
        Self { offset_s: 0.0, duration_s: f64::INFINITY }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.offset_s <= t && t < self.offset_s + self.duration_s
    }
}

/// Events inside `window`, rebased to start at zero and stably sorted by time.
pub fn extract_window(events: &[TraceEvent], window: Window) -> Vec<TraceEvent> {
    let mut out: Vec<TraceEvent> = events
        .iter()
        .filter(|e| window.contains(e.time_s))
        .map(|e| TraceEvent { time_s: e.time_s - window.offset_s, ..e.clone() })
        .collect();
    out.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    out
}

/// The `k` users with the most Schedule events, ties by ascending id.
pub fn top_users(events: &[TraceEvent], k: usize) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in events.iter().filter(|e| e.kind == TraceKind::Schedule && !e.user_id.is_empty()) {
        *counts.entry(&e.user_id).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(k).map(|(u, _)| u.to_owned()).collect()
}

/// Keeps machine events and every event of tasks owned by one of `users`.
/// A task is owned by the user named on any of its events, so rows that
/// omit the user (usage records, typically) follow their task.
pub fn filter_by_users(events: &[TraceEvent], users: &[String]) -> Vec<TraceEvent> {
    let users: BTreeSet<&str> = users.iter().map(String::as_str).collect();
    let kept: BTreeSet<&str> = events
        .iter()
        .filter(|e| !e.kind.is_machine_event() && users.contains(e.user_id.as_str()))
        .map(|e| e.task_id.as_str())
        .collect();
    events.iter().filter(|e| e.kind.is_machine_event() || kept.contains(e.task_id.as_str())).cloned().collect()
}

/// Machines that were stable throughout `window`, scheduled at least one
/// task in it and reported usage in it.
pub fn eligible_machines(events: &[TraceEvent], window: Window) -> BTreeSet<String> {
    let mut changed = BTreeSet::new();
    let mut scheduled = BTreeSet::new();
    let mut used = BTreeSet::new();
    for e in events.iter().filter(|e| window.contains(e.time_s) && !e.machine_id.is_empty()) {
        let set = match e.kind {
            k if k.is_machine_event() => &mut changed,
            TraceKind::Schedule => &mut scheduled,
            TraceKind::Usage => &mut used,
            _ => continue,
        };
        set.insert(e.machine_id.as_str());
    }
    scheduled.intersection(&used).filter(|m| !changed.contains(*m)).map(|m| (*m).to_owned()).collect()
}

/// Type of every machine present just before `at_s`, from add, update and
/// remove events.
pub fn machine_inventory(events: &[TraceEvent], at_s: f64) -> BTreeMap<String, String> {
    let mut ordered: Vec<&TraceEvent> =
        events.iter().filter(|e| e.kind.is_machine_event() && e.time_s < at_s).collect();
    ordered.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    let mut inventory = BTreeMap::new();
    for e in ordered {
        match e.kind {
            TraceKind::MachineRemove => {
                inventory.remove(&e.machine_id);
            }
            _ if !e.machine_type.is_empty() => {
                inventory.insert(e.machine_id.clone(), e.machine_type.clone());
            }
            _ => {}
        }
    }
    inventory
}

/// Rewrites machine types through `type_map`, which must be injective and
/// cover every type that occurs.
pub fn map_machine_types(
    events: &[TraceEvent],
    type_map: &BTreeMap<String, String>,
) -> Result<Vec<TraceEvent>, TraceError> {
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    for (from, to) in type_map {
        if let Some(prev) = seen.insert(to, from) {
            return Err(TraceError::NotBijective(prev.to_owned(), from.clone()));
        }
    }
    events
        .iter()
        .map(|e| {
            if e.machine_type.is_empty() {
                return Ok(e.clone());
            }
            let to = type_map.get(&e.machine_type).ok_or_else(|| TraceError::UnmappedType(e.machine_type.clone()))?;
            Ok(TraceEvent { machine_type: to.clone(), ..e.clone() })
        })
        .collect()
}

/// Assignment of trace machines to testbed nodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldMapping {
    pub assignments: BTreeMap<String, NodeId>,
    /// Schedule events landing on each node after folding.
    pub load: BTreeMap<NodeId, usize>,
}

/// Folds trace machines onto testbed nodes of the same type, balancing
/// Schedule counts greedily: machines in descending count (ties by id), each
/// to the least-loaded node of its type (ties by node id).
pub fn fold_machines(
    events: &[TraceEvent],
    nodes: &[NodeConfig],
) -> Result<(Vec<TraceEvent>, FoldMapping), TraceError> {
    let mut types: BTreeMap<&str, &str> = BTreeMap::new();
    for e in events.iter().filter(|e| e.kind.is_machine_event() && !e.machine_type.is_empty()) {
        types.insert(&e.machine_id, &e.machine_type);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in events.iter().filter(|e| !e.machine_id.is_empty()) {
        if !types.contains_key(e.machine_id.as_str()) {
            return Err(TraceError::UntypedMachine(e.machine_id.clone()));
        }
        let c = counts.entry(&e.machine_id).or_default();
        if e.kind == TraceKind::Schedule {
            *c += 1;
        }
    }

    let mut order: Vec<(&str, usize)> = counts.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let mut mapping = FoldMapping::default();
    for n in nodes {
        mapping.load.insert(n.node_id.clone(), 0);
    }
    for (machine, count) in order {
        let ty = types[machine];
        let target = nodes
            .iter()
            .filter(|n| n.type_id == ty)
            .min_by(|a, b| mapping.load[&a.node_id].cmp(&mapping.load[&b.node_id]).then(a.node_id.cmp(&b.node_id)))
            .ok_or_else(|| TraceError::NoTargetNode(ty.to_owned()))?;
        *mapping.load.get_mut(&target.node_id).expect("node registered") += count;
        mapping.assignments.insert(machine.to_owned(), target.node_id.clone());
    }

    let folded = events
        .iter()
        .map(|e| match mapping.assignments.get(&e.machine_id) {
            Some(node) => TraceEvent { machine_id: node.to_string(), ..e.clone() },
            None => e.clone(),
        })
        .collect();
    Ok((folded, mapping))
}

/// Iterations assigned to tasks whose duration cannot be read off the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskDefaults {
    pub iterations: u64,
}

impl Default for TaskDefaults {
    fn default() -> Self {
        Self { iterations: 750 }
    }
}

/// One task per Submit (first occurrence of each id), with requests scaled
/// by `reference` and iterations inverted from the Submit→Finish span on
/// the reference machine under the performance governor.
pub fn tasks_from_trace(
    events: &[TraceEvent],
    reference: &MachineSpec,
    defaults: TaskDefaults,
) -> Result<Vec<Task>, TraceError> {
    let mut submits: Vec<&TraceEvent> = Vec::new();
    let mut seen = BTreeSet::new();
    for e in events.iter().filter(|e| e.kind == TraceKind::Submit) {
        if seen.insert(e.task_id.as_str()) {
            submits.push(e);
        }
    }
    let per_iteration = reference.per_iteration_s.get(GovernorMode::Performance);
    let mut tasks = Vec::with_capacity(submits.len());
    for s in submits {
        let (Some(cpu), Some(mem)) = (s.cpu_req, s.mem_req) else {
            return Err(TraceError::IncompleteRecord(s.task_id.clone()));
        };
        let cores = cpu * f64::from(reference.cores);
        if !(cores > 0.0) || !(mem >= 0.0) {
            return Err(TraceError::IncompleteRecord(s.task_id.clone()));
        }
        let finish = events
            .iter()
            .filter(|e| e.kind == TraceKind::Finish && e.task_id == s.task_id && e.time_s >= s.time_s)
            .map(|e| e.time_s)
            .min_by(f64::total_cmp);
        let iterations = match finish {
            Some(f) => ((f - s.time_s) / per_iteration).round().max(1.0) as u64,
            None => defaults.iterations,
        };
        let mem_mib = (mem * reference.mem_mib as f64).round() as u64;
        tasks.push(Task::new(s.task_id.as_str(), s.time_s, cores, mem_mib, iterations).with_user(s.user_id.as_str()));
    }
    tasks.sort_by(|a, b| a.submit_time_s.total_cmp(&b.submit_time_s));
    Ok(tasks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleParams {
    pub window: Window,
    pub top_k: usize,
    /// Trace type → testbed type. Empty means identity on the types seen.
    pub type_map: BTreeMap<String, String>,
    /// For traces without machine information: skip eligibility, type
    /// mapping and folding.
    pub skip_machine_steps: bool,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self {
            window: Window { offset_s: 864_000.0, duration_s: 43_200.0 },
            top_k: 10,
            type_map: BTreeMap::new(),
            skip_machine_steps: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub events: Vec<TraceEvent>,
    pub users: Vec<String>,
    pub eligible: BTreeSet<String>,
    pub fold: Option<FoldMapping>,
}

/// Full sampling pipeline: window, top users, user filter, machine
/// eligibility, type mapping and folding onto `nodes`.
///
/// Machines enter the output as one MachineAdd at time zero carrying their
/// type as of the window start. Tasks that touch an ineligible machine are
/// dropped whole so the remaining task records stay consistent.
pub fn sample(raw: &[TraceEvent], params: &SampleParams, nodes: &[NodeConfig]) -> Result<Sampled, TraceError> {
    let windowed = extract_window(raw, params.window);
    let users = top_users(&windowed, params.top_k);
    let filtered = filter_by_users(&windowed, &users);
    if params.skip_machine_steps {
        let events = filtered.into_iter().filter(|e| !e.kind.is_machine_event()).collect();
        return Ok(Sampled { events, users, eligible: BTreeSet::new(), fold: None });
    }

    let inventory = machine_inventory(raw, params.window.offset_s);
    let rebased = Window { offset_s: 0.0, duration_s: params.window.duration_s };
    let eligible: BTreeSet<String> =
        eligible_machines(&filtered, rebased).into_iter().filter(|m| inventory.contains_key(m)).collect();

    let dropped: BTreeSet<&str> = filtered
        .iter()
        .filter(|e| !e.kind.is_machine_event() && !e.machine_id.is_empty() && !eligible.contains(&e.machine_id))
        .map(|e| e.task_id.as_str())
        .collect();
    let mut events: Vec<TraceEvent> =
        eligible.iter().map(|m| TraceEvent::machine(0.0, TraceKind::MachineAdd, m, &inventory[m])).collect();
    events.extend(
        filtered.iter().filter(|e| !e.kind.is_machine_event() && !dropped.contains(e.task_id.as_str())).cloned(),
    );

    let type_map = if params.type_map.is_empty() {
        eligible.iter().map(|m| (inventory[m].clone(), inventory[m].clone())).collect()
    } else {
        params.type_map.clone()
    };
    let mapped = map_machine_types(&events, &type_map)?;
    let (events, fold) = fold_machines(&mapped, nodes)?;
    Ok(Sampled { events, users, eligible, fold: Some(fold) })
}
