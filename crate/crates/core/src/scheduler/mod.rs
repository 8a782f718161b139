//! Placement policies.
//!
//! The energy-aware policy predicts, for every node with room for a task,
//! the task's energy `n_e` and performance `n_p = 1 / runtime`, normalizes
//! both by their maxima over the candidate set and scores
//! `e_w · (1 − n_e / max_e) + p_w · (n_p / max_p)`. The highest score wins.
//! Running tasks are periodically re-scored and migrated when a better node
//! appears. The baseline mimics the default Kubernetes spreading rule.

mod policy;

use std::collections::VecDeque;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{Node, NodeId, Task, TaskId, TradeoffWeights};
use crate::num::Scalar;
use crate::predictor::{PredictorError, PredictorSet};

pub use policy::{Policy, PolicyConfig};

#[derive(Debug, Error)]
pub enum SchedError {
    #[error("NoCandidates: no node can host task {0}")]
    NoCandidates(TaskId),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub node_id: NodeId,
    pub score: f64,
    pub predicted_energy_j: f64,
    /// Predicted performance, 1 / seconds.
    pub predicted_perf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Assign(NodeId),
    Migrate { from: NodeId, to: NodeId },
    Defer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingDecision {
    pub task_id: TaskId,
    pub action: Action,
    pub at_time_s: f64,
    /// Score of the chosen node, when one was chosen.
    pub score: Option<f64>,
}

/// Weighted normalized score of each candidate.
///
/// `energies` and `perfs` must be positive; maxima are taken over the slice.
pub fn score_vector<T: Scalar>(energies: &[T], perfs: &[T], e_w: T, p_w: T) -> Vec<T> {
    let max_e = energies.iter().copied().fold(T::zero(), T::max);
    let max_p = perfs.iter().copied().fold(T::zero(), T::max);
    energies
        .iter()
        .zip(perfs)
        .map(|(&e, &p)| {
            let s = e_w * (T::one() - e / max_e) + p_w * (p / max_p);
            s.max(T::zero()).min(T::one())
        })
        .collect()
}

pub fn scores(
    candidates: &[&Node],
    task: &Task,
    weights: TradeoffWeights,
    predictors: &PredictorSet,
) -> Result<Vec<NodeScore>, SchedError> {
    if candidates.is_empty() {
        return Err(SchedError::NoCandidates(task.task_id.clone()));
    }
    let mut energies = Vec::with_capacity(candidates.len());
    let mut perfs = Vec::with_capacity(candidates.len());
    for node in candidates {
        let p = predictors.predict(&node.spec.type_id, node.governor, task)?;
        energies.push(p.energy_j);
        perfs.push(1.0 / p.runtime_s);
    }
    let s = score_vector(&energies, &perfs, weights.energy(), weights.performance());
    Ok(candidates
        .iter()
        .zip(s)
        .zip(energies.iter().zip(&perfs))
        .map(|((node, score), (&e, &p))| NodeScore {
            node_id: node.node_id.clone(),
            score,
            predicted_energy_j: e,
            predicted_perf: p,
        })
        .collect())
}

/// Least-requested spreading: mean free fraction of cores and memory after
/// hypothetically placing the task. Candidates are assumed to fit.
pub fn baseline_k8s_score(candidates: &[&Node], task: &Task) -> Vec<NodeScore> {
    candidates
        .iter()
        .map(|node| {
            let (cores, mem) = node.free_resources();
            let cpu_after = (cores - task.cpu_req) / f64::from(node.spec.cores);
            let mem_after = (mem as f64 - task.mem_req_mib as f64) / node.spec.mem_mib as f64;
            NodeScore {
                node_id: node.node_id.clone(),
                score: 0.5 * (cpu_after + mem_after),
                predicted_energy_j: 0.0,
                predicted_perf: 0.0,
            }
        })
        .collect()
}

/// Highest score; exact ties go to `prefer` if it is tied, else to the
/// smallest node id.
fn argmax<'a>(scored: &'a [NodeScore], prefer: Option<&NodeId>) -> Option<&'a NodeScore> {
    scored.iter().fold(None, |best: Option<&NodeScore>, cand| match best {
        None => Some(cand),
        Some(b) if cand.score > b.score => Some(cand),
        Some(b) if cand.score == b.score => {
            let cand_pref = prefer == Some(&cand.node_id);
            let b_pref = prefer == Some(&b.node_id);
            if cand_pref && !b_pref || (cand_pref == b_pref && cand.node_id < b.node_id) {
                Some(cand)
            } else {
                Some(b)
            }
        }
        keep => keep,
    })
}

/// Chosen node plus the full score table it was chosen from.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub node_id: NodeId,
    pub score: f64,
    pub table: Vec<NodeScore>,
}

impl Choice {
    pub fn score_of(&self, node_id: &NodeId) -> Option<f64> {
        self.table.iter().find(|s| &s.node_id == node_id).map(|s| s.score)
    }
}

fn choose(
    policy: &Policy,
    task: &Task,
    cluster: &[Node],
    predictors: &PredictorSet,
    current_host: Option<&NodeId>,
) -> Result<Option<Choice>, SchedError> {
    let candidates: Vec<&Node> = cluster.iter().filter(|n| n.fits(task)).collect();
    if candidates.is_empty() {
        return Ok(None);
    }
    let table = match policy {
        Policy::Heats { .. } => scores(&candidates, task, task.weights, predictors)?,
        Policy::K8sBaseline => baseline_k8s_score(&candidates, task),
    };
    let best = argmax(&table, current_host).expect("non-empty table");
    Ok(Some(Choice { node_id: best.node_id.clone(), score: best.score, table: table.clone() }))
}

/// Best-scoring node among those with room for `task`, or `None` if no node
/// fits.
pub fn best_fit(
    task: &Task,
    weights: TradeoffWeights,
    cluster: &[Node],
    predictors: &PredictorSet,
) -> Result<Option<NodeId>, SchedError> {
    let candidates: Vec<&Node> = cluster.iter().filter(|n| n.fits(task)).collect();
    if candidates.is_empty() {
        return Ok(None);
    }
    let table = scores(&candidates, task, weights, predictors)?;
    Ok(argmax(&table, None).map(|s| s.node_id.clone()))
}

fn node_mut<'a>(cluster: &'a mut [Node], id: &NodeId) -> &'a mut Node {
    cluster.iter_mut().find(|n| &n.node_id == id).expect("node present in cluster")
}

/// One pass over the pending queue in FIFO order. Placed tasks are
/// allocated on `cluster` immediately; the others go back to the tail.
pub fn schedule(
    pending: &mut VecDeque<Task>,
    cluster: &mut [Node],
    predictors: &PredictorSet,
    policy: &Policy,
    now_s: f64,
) -> Result<Vec<SchedulingDecision>, SchedError> {
    let mut decisions = Vec::with_capacity(pending.len());
    let mut deferred = VecDeque::new();
    while let Some(task) = pending.pop_front() {
        match choose(policy, &task, cluster, predictors, None)? {
            Some(choice) => {
                node_mut(cluster, &choice.node_id).allocate(&task.task_id, task.demand()).expect("chosen node fits");
                decisions.push(SchedulingDecision {
                    task_id: task.task_id.clone(),
                    action: Action::Assign(choice.node_id),
                    at_time_s: now_s,
                    score: Some(choice.score),
                });
            }
            None => {
                decisions.push(SchedulingDecision {
                    task_id: task.task_id.clone(),
                    action: Action::Defer,
                    at_time_s: now_s,
                    score: None,
                });
                deferred.push_back(task);
            }
        }
    }
    *pending = deferred;
    Ok(decisions)
}

/// Re-scores every running task (ascending id) against a working copy of the
/// cluster in which the task's own resources count as free on its host.
/// A migration is proposed when the best node differs from the host and
/// beats the host's score by more than `epsilon`. Proposed moves are applied
/// to the working copy, so later tasks see them and every returned
/// migration is feasible when applied in order.
pub fn reschedule(
    running: &[Task],
    cluster: &[Node],
    predictors: &PredictorSet,
    policy: &Policy,
    now_s: f64,
) -> Result<Vec<SchedulingDecision>, SchedError> {
    let epsilon = match policy {
        Policy::Heats { epsilon, .. } => *epsilon,
        Policy::K8sBaseline => return Ok(Vec::new()),
    };
    let mut work: Vec<Node> = cluster.to_vec();
    let mut order: Vec<&Task> = running.iter().collect();
    order.sort_by(|a, b| a.task_id.cmp(&b.task_id));

    let mut decisions = Vec::new();
    for task in order {
        let Some(host) = task.current_node.clone() else { continue };
        let demand = node_mut(&mut work, &host).release(&task.task_id).expect("task resident on its host");
        let choice = choose(policy, task, &work, predictors, Some(&host))?.expect("host fits after release");
        let host_score = choice.score_of(&host).expect("host is a candidate");
        let target = if choice.node_id != host && choice.score - host_score > epsilon {
            decisions.push(SchedulingDecision {
                task_id: task.task_id.clone(),
                action: Action::Migrate { from: host.clone(), to: choice.node_id.clone() },
                at_time_s: now_s,
                score: Some(choice.score),
            });
            choice.node_id
        } else {
            host
        };
        node_mut(&mut work, &target).allocate(&task.task_id, demand).expect("target fits");
    }
    Ok(decisions)
}

pub fn write_decisions_csv<W: io::Write>(mut w: W, decisions: &[SchedulingDecision]) -> io::Result<()> {
    writeln!(w, "time_s,task_id,action,from_node,to_node,score")?;
    for d in decisions {
        let (action, from, to) = match &d.action {
            Action::Assign(n) => ("assign", "", n.as_str()),
            Action::Migrate { from, to } => ("migrate", from.as_str(), to.as_str()),
            Action::Defer => ("defer", "", ""),
        };
        let score = d.score.map(|s| s.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{},{}", d.at_time_s, d.task_id, action, from, to, score)?;
    }
    Ok(())
}
