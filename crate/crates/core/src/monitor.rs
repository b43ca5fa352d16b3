//! Integrity measures and threshold detection.

use serde::{Deserialize, Serialize};

use crate::blockvec::{l2, BlockVec};
use crate::error::{Error, Result};

/// `χ̂ᵢ = ‖x̂[i] + x̄[i]‖₂`.
pub fn robot_integrity(block: &[f64]) -> f64 {
    l2(block)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub step: usize,
    pub chi_i: Vec<f64>,
    pub chi: f64,
    /// Robots with `χ̂ᵢ > ε`, ascending.
    pub detected: Vec<usize>,
    pub swarm_alarm: bool,
}

impl IntegrityReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Builds the report for one step. Comparisons are strict.
pub fn evaluate(step: usize, reconstruction: &BlockVec, epsilon: f64) -> Result<IntegrityReport> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", format!("must be > 0, got {epsilon}")));
    }
    let chi_i: Vec<f64> = reconstruction.blocks().map(robot_integrity).collect();
    let chi = chi_i.iter().sum();
    let detected = chi_i
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > epsilon)
        .map(|(i, _)| i)
        .collect();
    Ok(IntegrityReport {
        step,
        swarm_alarm: chi > epsilon,
        chi_i,
        chi,
        detected,
    })
}

/// Confirms a detection only after `k` consecutive steps above threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfirmationTracker {
    k: usize,
    robot_runs: Vec<usize>,
    swarm_run: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Confirmed {
    pub detected: Vec<usize>,
    pub swarm_alarm: bool,
}

impl ConfirmationTracker {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("confirm_steps", "must be >= 1"));
        }
        Ok(Self {
            k,
            robot_runs: vec![0; n],
            swarm_run: 0,
        })
    }

    pub fn update(&mut self, report: &IntegrityReport) -> Confirmed {
        let mut flagged = vec![false; self.robot_runs.len()];
        for &i in &report.detected {
            if let Some(f) = flagged.get_mut(i) {
                *f = true;
            }
        }
        for (run, f) in self.robot_runs.iter_mut().zip(flagged) {
            *run = if f { *run + 1 } else { 0 };
        }
        self.swarm_run = if report.swarm_alarm { self.swarm_run + 1 } else { 0 };
        Confirmed {
            detected: self
                .robot_runs
                .iter()
                .enumerate()
                .filter(|(_, r)| **r >= self.k)
                .map(|(i, _)| i)
                .collect(),
            swarm_alarm: self.swarm_run >= self.k,
        }
    }
}
