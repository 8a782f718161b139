use std::cmp::Ordering;

use crate::cluster::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    TaskCompletion { task: usize, epoch: u64 },
    TaskArrival { task: usize },
    SchedulingTick { tick: u64 },
    RescheduleTick { tick: u64 },
    ForcedMigration { task: usize, to: NodeId },
    MonitorTick { tick: u64 },
}

impl EventKind {
    /// Order among events at the same instant: completions free capacity
    /// before arrivals are queued and before any placement pass runs.
    pub fn priority(&self) -> u8 {
        match self {
            EventKind::TaskCompletion { .. } => 0,
            EventKind::TaskArrival { .. } => 1,
            EventKind::SchedulingTick { .. } => 2,
            EventKind::RescheduleTick { .. } => 3,
            EventKind::ForcedMigration { .. } => 4,
            EventKind::MonitorTick { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub time_s: f64,
    pub kind: EventKind,
    pub seq: u64,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time_s
            .total_cmp(&other.time_s)
            .then(self.kind.priority().cmp(&other.kind.priority()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue of events with a monotone sequence counter.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: std::collections::BinaryHeap<std::cmp::Reverse<SimEvent>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time_s: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(std::cmp::Reverse(SimEvent { time_s, kind, seq }));
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|r| r.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
