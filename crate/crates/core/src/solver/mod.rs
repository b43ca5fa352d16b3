//! Per-robot mathematics of the SCP outer loop and ADMM inner loop.
//!
//! Each robot `i` owns a [`SolverNode`] holding its accumulated error `x̄[i]`,
//! the copies `ŵⱼ⁽ⁱ⁾` it keeps of each neighbor's error, the multipliers
//! `λᵢ⁽ˡ⁾` (one per incident edge) and `μᵢ⁽ʲ⁾` (one per neighbor), and the
//! local linearization of the range constraints.

mod node;
pub mod prox;

use serde::{Deserialize, Serialize};

pub use node::{LinearizedEdge, NeighborPose, SolverNode};

use crate::error::{Error, Result};

/// How multipliers carry across SCP outer rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartMode {
    /// Multipliers always carry over.
    #[default]
    Warm,
    /// Multipliers carry over until one exceeds the dual threshold, then reset.
    Cold,
    /// Multipliers are zeroed after every outer round.
    Reset,
}

impl StartMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StartMode::Warm => "warm",
            StartMode::Cold => "cold",
            StartMode::Reset => "reset",
        }
    }
}

impl std::str::FromStr for StartMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warm" => Ok(StartMode::Warm),
            "cold" => Ok(StartMode::Cold),
            "reset" => Ok(StartMode::Reset),
            other => Err(Error::invalid(
                "start",
                format!("expected warm, cold or reset, got `{other}`"),
            )),
        }
    }
}

/// Point at which the dual update evaluates the constraint residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualEval {
    /// Latest primal iterates (x̂*, ŵ*) of the current inner iteration.
    #[default]
    Latest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// ADMM penalty ρ.
    pub rho: f64,
    /// Inner ADMM iterations per outer round.
    pub n_admm: u32,
    /// SCP outer rounds per simulation step.
    pub scp_rounds_per_step: u32,
    /// Integrity threshold ε; `None` resolves to `5 (ν_max + ω_max)`.
    pub epsilon: Option<f64>,
    /// Block multiplier norm above which the cold-start flag is raised.
    pub dual_threshold: f64,
    pub start: StartMode,
    pub dual_eval: DualEval,
    pub prox_tol: f64,
    pub max_prox_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 0.25,
            n_admm: 10,
            scp_rounds_per_step: 1,
            epsilon: None,
            dual_threshold: 10.0,
            start: StartMode::Warm,
            dual_eval: DualEval::Latest,
            prox_tol: 1e-10,
            max_prox_iter: 100,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid("solver.rho", format!("must be > 0, got {}", self.rho)));
        }
        if self.n_admm == 0 {
            return Err(Error::invalid("solver.n_admm", "must be >= 1"));
        }
        if self.scp_rounds_per_step == 0 {
            return Err(Error::invalid("solver.scp_rounds_per_step", "must be >= 1"));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) {
                return Err(Error::invalid("solver.epsilon", format!("must be > 0, got {eps}")));
            }
        }
        if !(self.dual_threshold > 0.0) {
            return Err(Error::invalid(
                "solver.dual_threshold",
                format!("must be > 0, got {}", self.dual_threshold),
            ));
        }
        if !(self.prox_tol > 0.0) {
            return Err(Error::invalid("solver.prox_tol", "must be > 0"));
        }
        if self.max_prox_iter == 0 {
            return Err(Error::invalid("solver.max_prox_iter", "must be >= 1"));
        }
        Ok(())
    }

    /// ε, defaulting to `5 (ν_max + ω_max)`.
    pub fn resolved_epsilon(&self, nu_max: f64, omega_max: f64) -> f64 {
        self.epsilon.unwrap_or(5.0 * (nu_max + omega_max))
    }
}
