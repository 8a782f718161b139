//! Machine constants recovered from the single-task migration scenario.
//!
//! A k-means task alone on the AMD server runs for 69 s and draws 1047 J.
//! Moving it to the ARM board 30 s after start stretches the total runtime to
//! 5.4x and cuts its energy by 34%. Two linear equations (one for time, one for
//! energy) then pin the ARM board's per-task power and slowdown relative to
//! the AMD server.

use serde::{Deserialize, Serialize};

/// Observed behavior of one task, stay-put versus migrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MigrationScenario {
    pub baseline_runtime_s: f64,
    pub baseline_energy_j: f64,
    pub migrate_at_s: f64,
    pub runtime_factor: f64,
    pub energy_saving: f64,
}

impl Default for MigrationScenario {
    fn default() -> Self {
        Self {
            baseline_runtime_s: 69.0,
            baseline_energy_j: 1047.0,
            migrate_at_s: 30.0,
            runtime_factor: 5.4,
            energy_saving: 0.34,
        }
    }
}

/// Constants implied by a [`MigrationScenario`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Task power on the source machine, W.
    pub source_power_w: f64,
    /// Time the task spends on the target after migrating, s.
    pub target_phase_s: f64,
    /// Energy the task draws on the target after migrating, J.
    pub target_phase_energy_j: f64,
    /// Task power on the target machine, W.
    pub target_power_w: f64,
    /// Per-iteration time on the target divided by the source's.
    pub target_slowdown: f64,
}

impl MigrationScenario {
    pub fn solve(&self) -> Calibration {
        let source_power_w = self.baseline_energy_j / self.baseline_runtime_s;
        let target_phase_s = self.runtime_factor * self.baseline_runtime_s - self.migrate_at_s;
        let target_phase_energy_j =
            (1.0 - self.energy_saving) * self.baseline_energy_j - source_power_w * self.migrate_at_s;
        let remaining_source_s = self.baseline_runtime_s - self.migrate_at_s;
        Calibration {
            source_power_w,
            target_phase_s,
            target_phase_energy_j,
            target_power_w: target_phase_energy_j / target_phase_s,
            target_slowdown: target_phase_s / remaining_source_s,
        }
    }
}

/// Per-iteration time of the calibration task on the AMD server under the
/// performance governor. The scenario task therefore has 690 iterations.
pub const REFERENCE_PER_ITERATION_S: f64 = 0.1;

/// Iteration count of the scenario task on the reference machine.
pub fn scenario_iterations(scenario: &MigrationScenario) -> u64 {
    (scenario.baseline_runtime_s / REFERENCE_PER_ITERATION_S).round() as u64
}
