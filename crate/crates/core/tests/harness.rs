use swarm_fdir::attack::{AttackPhase, AttackSchedule};
use swarm_fdir::harness::export::{comparison_csv, curve_csv, metadata_json, trial_csv};
use swarm_fdir::harness::scenario::{AttackConfig, TopologyConfig};
use swarm_fdir::harness::{monte_carlo, named_scenario, run_trial, ScenarioConfig, SimMode, SCENARIO_NAMES};

fn scheduled() -> ScenarioConfig {
    let schedule = AttackSchedule::new(vec![AttackPhase {
        start: 5,
        end: 40,
        targets: vec![2],
        offsets: vec![vec![1.0, 0.0, 0.0]],
    }])
    .unwrap();
    ScenarioConfig {
        name: "scheduled".into(),
        n_agents: 10,
        topology: TopologyConfig {
            mean_degree: 6.0,
            ..Default::default()
        },
        attack: AttackConfig {
            windows: vec![],
            schedule: Some(schedule),
            ..Default::default()
        },
        steps: 40,
        trials: 3,
        master_seed: 40,
        ..ScenarioConfig::default()
    }
}

#[test]
fn scheduled_attack_is_confirmed_after_onset() {
    let cfg = scheduled();
    let m = run_trial(&cfg, 40).unwrap();
    assert!(!m.diverged);
    assert_eq!(m.records.len(), 40);
    assert!(m.records[..5].iter().all(|r| r.targets.is_empty()));
    assert!(m.records[5..].iter().all(|r| r.targets == vec![2]));
    let lat = &m.latencies[0];
    assert_eq!((lat.robot, lat.onset), (2, 5));
    let l = lat.latency.expect("robot 2 confirmed");
    assert!(l + 1 >= cfg.confirm_steps);
    let first = m.records.iter().position(|r| r.confirmed.contains(&2)).unwrap();
    assert_eq!(first, 5 + l);
    assert_eq!(m.final_record().unwrap().confirmed, vec![2]);
}

#[test]
fn dynamics_mode_trial_runs_and_detects() {
    let mut cfg = scheduled();
    cfg.sim.mode = SimMode::Dynamics;
    let m = run_trial(&cfg, 41).unwrap();
    assert!(!m.diverged);
    assert!(m.final_record().unwrap().report.detected.contains(&2));
}

#[test]
fn exports_are_consistent_with_summary() {
    let cfg = scheduled();
    let (summary, metrics) = monte_carlo(&cfg, true).unwrap();
    assert_eq!(summary.trials, 3);

    let csv = trial_csv(&metrics[0], true);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 41);
    let width = rows[0].split(',').count();
    assert_eq!(width, 5 + 10);
    assert!(rows.iter().all(|r| r.split(',').count() == width));

    let curve = curve_csv(&summary);
    let last: Vec<f64> = curve.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 39.0);
    assert_eq!(last[1], summary.final_mean_rmse);

    let cmp = comparison_csv(&[(&cfg, &summary)]);
    let row: Vec<&str> = cmp.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "scheduled");
    assert_eq!(row[5], "3");
    assert_eq!(row[10].parse::<f64>().unwrap(), summary.precision);

    let meta: serde_json::Value = serde_json::from_str(&metadata_json("monte-carlo", &[cfg.clone()], &summary).unwrap()).unwrap();
    assert_eq!(meta["seeds"][0], serde_json::json!([40, 41, 42]));
    assert_eq!(meta["command"], "monte-carlo");
    let back: ScenarioConfig = serde_json::from_value(meta["configs"][0].clone()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn named_scenarios_build_and_validate() {
    for name in SCENARIO_NAMES {
        let s = named_scenario(name).unwrap();
        assert!(!s.variants.is_empty(), "{name}");
        for v in &s.variants {
            v.validate().unwrap();
            let again = ScenarioConfig::from_json(&v.to_json_pretty()).unwrap();
            assert_eq!(&again, v);
        }
    }
    assert!(named_scenario("nope").unwrap_err().is_config_error());
}

#[test]
fn config_errors_name_the_field() {
    let err = ScenarioConfig::from_json(r#"{"n_agents": 1}"#).unwrap_err();
    assert!(err.is_config_error());
    assert!(err.to_string().contains("n_agents"), "{err}");
    let err = ScenarioConfig::from_json(r#"{"bogus": 1}"#).unwrap_err();
    assert!(err.is_config_error());
    let err = ScenarioConfig::from_json(r#"{"solver": {"rho": -1.0}}"#).unwrap_err();
    assert!(err.to_string().contains("solver.rho"), "{err}");
}
