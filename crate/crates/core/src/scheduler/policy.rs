use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterError, TradeoffWeights};

/// Default rescheduling period, seconds.
pub const DEFAULT_RESCHEDULE_INTERVAL_S: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheduler", rename_all = "snake_case")]
pub enum Policy {
    Heats {
        h_value: f64,
        #[serde(default)]
        epsilon: f64,
        #[serde(default = "default_interval")]
        reschedule_interval_s: f64,
    },
    K8sBaseline,
}

fn default_interval() -> f64 {
    DEFAULT_RESCHEDULE_INTERVAL_S
}

impl Policy {
    pub fn heats(h_value: f64) -> Self {
        Policy::Heats { h_value, epsilon: 0.0, reschedule_interval_s: DEFAULT_RESCHEDULE_INTERVAL_S }
    }

    pub fn weights(&self) -> Result<Option<TradeoffWeights>, ClusterError> {
        match self {
            Policy::Heats { h_value, .. } => TradeoffWeights::from_h(*h_value).map(Some),
            Policy::K8sBaseline => Ok(None),
        }
    }

    pub fn reschedule_interval_s(&self) -> Option<f64> {
        match self {
            Policy::Heats { reschedule_interval_s, .. } => Some(*reschedule_interval_s),
            Policy::K8sBaseline => None,
        }
    }

    pub fn h_value(&self) -> Option<f64> {
        match self {
            Policy::Heats { h_value, .. } => Some(*h_value),
            Policy::K8sBaseline => None,
        }
    }
}

/// A policy with the label it is reported under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub label: String,
    #[serde(flatten)]
    pub policy: Policy,
}

impl PolicyConfig {
    pub fn new(label: impl Into<String>, policy: Policy) -> Self {
        Self { label: label.into(), policy }
    }
}
