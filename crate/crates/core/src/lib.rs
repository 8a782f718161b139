//! Trace-driven simulation of energy- and heterogeneity-aware task
//! scheduling on a mixed cluster.
//!
//! The crate is organized bottom-up: [`cluster`] holds the domain types,
//! [`predictor`] probes machines and fits per-type regression models,
//! [`scheduler`] scores nodes and decides placements and migrations,
//! [`sim`] runs the discrete-event engine, [`trace`] generates and samples
//! workloads, and [`experiment`] drives comparisons across policies.
//!
//! The numeric kernels (least squares, scoring, energy integration) are
//! generic over [`num::Scalar`]; the aliases below fix them to `f64`.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cluster;
pub mod experiment;
pub mod linalg;
pub mod num;
pub mod predictor;
pub mod rng;
pub mod scheduler;
pub mod sim;
pub mod trace;

pub use cluster::{ClusterConfig, GovernorMode, MachineSpec, Node, NodeId, Task, TaskId, TradeoffWeights};
pub use num::Scalar;

/// Scalar used by the simulator.
pub type Real = f64;
pub type LinearModel = predictor::LinearModel<Real>;
pub type LinearModelF32 = predictor::LinearModel<f32>;
