use rayon::prelude::*;
use serde::Serialize;

use super::scenario::ScenarioConfig;
use super::trial::{mean_std, run_trial, TrialMetrics};
use crate::error::Result;

/// Short per-trial outcome kept alongside the aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub diverged: bool,
    pub diverged_at: Option<usize>,
    pub final_mean_rmse: f64,
    pub final_confirmed: Vec<usize>,
    pub final_targets: Vec<usize>,
    pub alarm_steps: usize,
    pub resets: usize,
    pub max_dual_norm: f64,
}

impl From<&TrialMetrics> for TrialSummary {
    fn from(m: &TrialMetrics) -> Self {
        let last = m.final_record();
        Self {
            seed: m.seed,
            diverged: m.diverged,
            diverged_at: m.diverged_at,
            final_mean_rmse: m.final_mean_rmse(),
            final_confirmed: last.map(|r| r.confirmed.clone()).unwrap_or_default(),
            final_targets: last.map(|r| r.targets.clone()).unwrap_or_default(),
            alarm_steps: m.alarm_steps(),
            resets: m.total_resets(),
            max_dual_norm: m.records.iter().map(|r| r.max_dual_norm).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub name: String,
    pub trials: usize,
    pub diverged: usize,
    pub divergence_rate: f64,
    /// Per step: mean over converged trials of the per-trial mean RMSE.
    pub mean_curve: Vec<f64>,
    /// Per step: standard deviation over converged trials.
    pub std_curve: Vec<f64>,
    /// Mean final mean RMSE over converged trials (NaN if none converged).
    pub final_mean_rmse: f64,
    pub final_std_rmse: f64,
    /// Final-step confirmed detections against active targets, pooled over converged trials.
    pub precision: f64,
    pub recall: f64,
    /// Steps with a confirmed swarm alarm, summed over all trials.
    pub alarm_steps: usize,
    pub trial_summaries: Vec<TrialSummary>,
}

/// Pools a list of trials in the given order.
pub fn aggregate(name: &str, metrics: &[TrialMetrics]) -> MonteCarloSummary {
    let converged: Vec<&TrialMetrics> = metrics.iter().filter(|m| !m.diverged).collect();
    let steps = converged.iter().map(|m| m.records.len()).max().unwrap_or(0);
    let mut mean_curve = Vec::with_capacity(steps);
    let mut std_curve = Vec::with_capacity(steps);
    for k in 0..steps {
        let vals: Vec<f64> = converged
            .iter()
            .filter_map(|m| m.records.get(k).map(|r| r.mean_rmse))
            .collect();
        let (m, s) = mean_std(&vals);
        mean_curve.push(m);
        std_curve.push(s);
    }
    let finals: Vec<f64> = converged.iter().map(|m| m.final_mean_rmse()).collect();
    let (final_mean_rmse, final_std_rmse) = mean_std(&finals);

    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for m in &converged {
        if let Some(r) = m.final_record() {
            let hit = r.confirmed.iter().filter(|i| r.targets.contains(i)).count();
            tp += hit;
            fp += r.confirmed.len() - hit;
            fneg += r.targets.len() - hit;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let diverged = metrics.len() - converged.len();
    MonteCarloSummary {
        name: name.to_string(),
        trials: metrics.len(),
        diverged,
        divergence_rate: if metrics.is_empty() {
            0.0
        } else {
            diverged as f64 / metrics.len() as f64
        },
        mean_curve,
        std_curve,
        final_mean_rmse,
        final_std_rmse,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        alarm_steps: metrics.iter().map(|m| m.alarm_steps()).sum(),
        trial_summaries: metrics.iter().map(TrialSummary::from).collect(),
    }
}

/// Runs `cfg.trials` trials with seeds `master_seed + t`, in parallel on the
/// current rayon pool when `parallel` is set. Results are in trial order.
pub fn run_trials(cfg: &ScenarioConfig, parallel: bool) -> Result<Vec<TrialMetrics>> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.trials).map(|t| cfg.trial_seed(t)).collect();
    if parallel {
        seeds.par_iter().map(|&s| run_trial(cfg, s)).collect()
    } else {
        seeds.iter().map(|&s| run_trial(cfg, s)).collect()
    }
}

pub fn monte_carlo(cfg: &ScenarioConfig, parallel: bool) -> Result<(MonteCarloSummary, Vec<TrialMetrics>)> {
    let metrics = run_trials(cfg, parallel)?;
    Ok((aggregate(&cfg.name, &metrics), metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::{AttackConfig, AttackWindow, TopologyConfig};

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n_agents: 8,
            topology: TopologyConfig {
                mean_degree: 5.0,
                ..Default::default()
            },
            attack: AttackConfig {
                windows: vec![AttackWindow {
                    start: 0,
                    end: 30,
                    count: 1,
                }],
                ..Default::default()
            },
            steps: 30,
            trials: 3,
            master_seed: 11,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn single_trial_aggregate_equals_trial() {
        let cfg = ScenarioConfig { trials: 1, ..small() };
        let (s, m) = monte_carlo(&cfg, false).unwrap();
        assert_eq!(s.mean_curve, m[0].mean_rmse());
        assert!(s.std_curve.iter().all(|v| *v == 0.0));
        assert_eq!(s.final_mean_rmse, m[0].final_mean_rmse());
    }

    #[test]
    fn aggregate_is_mean_of_trial_means() {
        let (s, m) = monte_carlo(&small(), false).unwrap();
        for k in [0, 10, 29] {
            let want = m.iter().map(|t| t.records[k].mean_rmse).sum::<f64>() / 3.0;
            assert!((s.mean_curve[k] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let (a, _) = monte_carlo(&small(), false).unwrap();
        let (b, _) = monte_carlo(&small(), true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_isolation() {
        let base = run_trials(&small(), false).unwrap();
        let shifted = run_trials(
            &ScenarioConfig {
                master_seed: 12,
                ..small()
            },
            false,
        )
        .unwrap();
        assert_eq!(base[1], shifted[0]);
        assert_eq!(base[2], shifted[1]);
        assert_ne!(base[0], shifted[0]);
    }
}
