//! Scenarios, trial execution, Monte Carlo aggregation, a centralized
//! reference solver and artifact export.

pub mod export;
pub mod montecarlo;
pub mod oracle;
pub mod scenario;
pub mod trial;

pub use montecarlo::{aggregate, monte_carlo, run_trials, MonteCarloSummary, TrialSummary};
pub use oracle::{centralized_oracle, CentralizedOracle};
pub use scenario::{named_scenario, Overrides, Scenario, ScenarioConfig, SimMode, SCENARIO_NAMES};
pub use trial::{reconstruction_error, run_trial, run_trial_with, TrialMetrics, TrialSetup};
