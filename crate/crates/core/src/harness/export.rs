//! CSV and JSON artifacts. Output bytes depend only on the inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::montecarlo::MonteCarloSummary;
use super::scenario::ScenarioConfig;
use super::trial::TrialMetrics;
use crate::error::{Error, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One row per step: `step,mean_rmse,std_rmse,chi,n_detected[,rmse_i...]`.
pub fn trial_csv(metrics: &TrialMetrics, per_robot: bool) -> String {
    let mut out = String::from("step,mean_rmse,std_rmse,chi,n_detected");
    let n = metrics.records.first().map_or(0, |r| r.rmse.len());
    if per_robot {
        for i in 0..n {
            write!(out, ",rmse_{i}").unwrap();
        }
    }
    out.push('\n');
    for r in &metrics.records {
        write!(
            out,
            "{},{},{},{},{}",
            r.step,
            r.mean_rmse,
            r.std_rmse,
            r.report.chi,
            r.report.detected.len()
        )
        .unwrap();
        if per_robot {
            for v in &r.rmse {
                write!(out, ",{v}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// Aggregate curve: `step,mean_rmse,std_rmse` over converged trials.
pub fn curve_csv(summary: &MonteCarloSummary) -> String {
    let mut out = String::from("step,mean_rmse,std_rmse\n");
    for (k, (m, s)) in summary.mean_curve.iter().zip(&summary.std_curve).enumerate() {
        writeln!(out, "{k},{m},{s}").unwrap();
    }
    out
}

/// One row per configuration, for comparing variants.
pub fn comparison_csv(rows: &[(&ScenarioConfig, &MonteCarloSummary)]) -> String {
    let mut out = String::from(
        "variant,rho,omega_max,nu_max,start,trials,diverged,divergence_rate,final_mean_rmse,final_std_rmse,precision,recall,alarm_steps\n",
    );
    for (cfg, s) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            cfg.name,
            cfg.solver.rho,
            cfg.noise.omega_max,
            cfg.noise.nu_max,
            cfg.solver.start.as_str(),
            s.trials,
            s.diverged,
            s.divergence_rate,
            s.final_mean_rmse,
            s.final_std_rmse,
            s.precision,
            s.recall,
            s.alarm_steps
        )
        .unwrap();
    }
    out
}

/// Integrity reports, one JSON object per line.
pub fn integrity_jsonl(metrics: &TrialMetrics) -> String {
    let mut out = String::new();
    for r in &metrics.records {
        out.push_str(&r.report.to_json_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
pub struct Metadata<'a, T: Serialize> {
    pub version: &'static str,
    pub command: &'a str,
    pub configs: &'a [ScenarioConfig],
    pub seeds: Vec<Vec<u64>>,
    pub results: T,
}

/// Pretty JSON metadata with the resolved configs and every trial seed.
pub fn metadata_json<T: Serialize>(command: &str, configs: &[ScenarioConfig], results: T) -> Result<String> {
    let meta = Metadata {
        version: CODE_VERSION,
        command,
        configs,
        seeds: configs
            .iter()
            .map(|c| (0..c.trials).map(|t| c.trial_seed(t)).collect())
            .collect(),
        results,
    };
    let mut s = serde_json::to_string_pretty(&meta)?;
    s.push('\n');
    Ok(s)
}

/// File-name-safe form of a variant name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.csv` and `<stem>.integrity.jsonl` for one trial.
pub fn export_trial(dir: &Path, stem: &str, metrics: &TrialMetrics, per_robot: bool) -> Result<Vec<PathBuf>> {
    let csv = dir.join(format!("{stem}.csv"));
    write_file(&csv, &trial_csv(metrics, per_robot))?;
    let jsonl = dir.join(format!("{stem}.integrity.jsonl"));
    write_file(&jsonl, &integrity_jsonl(metrics))?;
    Ok(vec![csv, jsonl])
}
