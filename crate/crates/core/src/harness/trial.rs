use serde::Serialize;

use super::scenario::{ScenarioConfig, SimMode};
use crate::attack::AttackSchedule;
use crate::blockvec::{BlockLayout, BlockVec};
use crate::error::{Error, Result};
use crate::measurement::RangeModel;
use crate::monitor::{evaluate, ConfirmationTracker, IntegrityReport};
use crate::rng::{stream, Purpose};
use crate::runtime::SwarmRuntime;
use crate::simworld::{kinematic_mode_step, random_formation, AgentModel, DynamicWorld};
use crate::topology::{radius_for_mean_degree, random_geometric_graph, SwarmGraph, TopologySchedule};

/// Block-wise `‖x_true[i] − x_recon[i]‖₂`.
pub fn reconstruction_error(x_true: &BlockVec, x_recon: &BlockVec) -> Result<Vec<f64>> {
    if x_true.layout() != x_recon.layout() {
        return Err(Error::Shape("true and reconstructed errors have different layouts".into()));
    }
    Ok(x_true.sub(x_recon)?.block_norms())
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Everything a trial needs that is drawn once from its seed.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub seed: u64,
    /// Robot positions (one block of `dimension` per robot).
    pub formation: BlockVec,
    pub topology: TopologySchedule,
    pub attack: AttackSchedule,
    /// Reference norm for the divergence rule.
    pub reference_norm: f64,
}

impl TrialSetup {
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_agents;
        let d = cfg.dimension;
        let pos_layout = BlockLayout::uniform(n, d)?;
        let formation = match &cfg.formation.positions {
            Some(p) => BlockVec::from_blocks(p)?,
            None => random_formation(n, &cfg.formation.extents, seed)?,
        };
        let initial = match &cfg.topology.graph {
            Some(g) => SwarmGraph::from_description(g)?,
            None => {
                let r = match cfg.topology.radius {
                    Some(r) => r,
                    None => radius_for_mean_degree(&formation, cfg.topology.mean_degree)?,
                };
                random_geometric_graph(n, r, Some(&formation), seed)?.graph
            }
        };
        let mut phases = vec![(0, initial)];
        for s in &cfg.topology.switches {
            phases.push((s.start, SwarmGraph::from_description(&s.graph)?));
        }
        let topology = TopologySchedule::new(phases)?;
        let attack = match &cfg.attack.schedule {
            Some(s) => s.clone(),
            None => {
                let windows: Vec<_> = cfg.attack.windows.iter().map(|w| (w.start, w.end, w.count)).collect();
                AttackSchedule::random(n, d, &windows, cfg.attack.magnitude, cfg.attack.disjoint, seed)?
            }
        };
        attack.validate(&pos_layout)?;
        let reference_norm = attack
            .peak_norm(&pos_layout)?
            .max(cfg.noise.nu_max + cfg.noise.omega_max);
        Ok(Self {
            seed,
            formation,
            topology,
            attack,
            reference_norm,
        })
    }
}

/// Onset and confirmation of a detection for one attacked robot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DetectionLatency {
    pub robot: usize,
    pub phase: usize,
    pub onset: usize,
    /// Steps from onset to first confirmed detection within the phase.
    pub latency: Option<usize>,
}

/// Per-step record of a trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    /// Per-robot ‖e[i]‖₂.
    pub rmse: Vec<f64>,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub report: IntegrityReport,
    /// Robots confirmed over `confirm_steps` consecutive steps.
    pub confirmed: Vec<usize>,
    pub confirmed_alarm: bool,
    /// Robots attacked at this step.
    pub targets: Vec<usize>,
    pub max_dual_norm: f64,
    pub resets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub diverged: bool,
    pub diverged_at: Option<usize>,
    pub reference_norm: f64,
    pub latencies: Vec<DetectionLatency>,
}

impl TrialMetrics {
    pub fn mean_rmse(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_rmse).collect()
    }

    pub fn final_mean_rmse(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.mean_rmse)
    }

    pub fn final_record(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    /// Steps with a confirmed swarm alarm.
    pub fn alarm_steps(&self) -> usize {
        self.records.iter().filter(|r| r.confirmed_alarm).count()
    }

    pub fn total_resets(&self) -> usize {
        self.records.iter().map(|r| r.resets).sum()
    }
}

enum World {
    Kinematic,
    Dynamics(Box<DynamicWorld>),
}

/// Runs one seeded trial.
pub fn run_trial(cfg: &ScenarioConfig, seed: u64) -> Result<TrialMetrics> {
    let setup = TrialSetup::new(cfg, seed)?;
    run_trial_with(cfg, &setup).map_err(|e| match e {
        Error::Trial { .. } => e,
        other => Error::Trial {
            trial: seed,
            step: None,
            source: Box::new(other),
        },
    })
}

/// Runs a trial from an already drawn setup.
pub fn run_trial_with(cfg: &ScenarioConfig, setup: &TrialSetup) -> Result<TrialMetrics> {
    let n = cfg.n_agents;
    let d = cfg.dimension;
    let pos_layout = BlockLayout::uniform(n, d)?;
    let (robot_layout, mut world) = match cfg.sim.mode {
        SimMode::Kinematic => (pos_layout.clone(), World::Kinematic),
        SimMode::Dynamics => {
            let model = AgentModel::double_integrator(d, cfg.sim.dt, cfg.sim.kp, cfg.sim.kv)?;
            let layout = BlockLayout::uniform(n, 2 * d)?;
            let mut p0 = BlockVec::zeros(layout.clone());
            for i in 0..n {
                p0.block_mut(i)[..d].copy_from_slice(setup.formation.block(i));
            }
            let world = DynamicWorld::new(model, p0.clone(), Some(p0))?;
            (layout, World::Dynamics(Box::new(world)))
        }
    };
    let eps = cfg.epsilon();
    let mut graph = setup.topology.at(0).clone();
    let mut model = RangeModel::new(graph.clone(), robot_layout.clone(), d)?;
    let mut rt = SwarmRuntime::new(graph.clone(), robot_layout.clone(), d)?.with_parallel(cfg.parallel_nodes);
    let mut tracker = ConfirmationTracker::new(n, cfg.confirm_steps)?;

    let mut records = Vec::with_capacity(cfg.steps);
    let mut diverged_at = None;
    let mut latencies: Vec<DetectionLatency> = setup
        .attack
        .phases
        .iter()
        .enumerate()
        .flat_map(|(p, ph)| {
            ph.targets.iter().map(move |&robot| DetectionLatency {
                robot,
                phase: p,
                onset: ph.start,
                latency: None,
            })
        })
        .collect();

    for k in 0..cfg.steps {
        let ctx = |e: Error| Error::Trial {
            trial: setup.seed,
            step: Some(k),
            source: Box::new(e),
        };
        let g = setup.topology.at(k);
        if *g != graph {
            graph = g.clone();
            model = RangeModel::new(graph.clone(), robot_layout.clone(), d).map_err(ctx)?;
            rt.set_graph(graph.clone()).map_err(ctx)?;
        }
        let (targets, offsets) = setup.attack.active_faults(k, &pos_layout).map_err(ctx)?;
        let (p, p_hat, x_true) = match &mut world {
            World::Kinematic => {
                let s = kinematic_mode_step(&setup.formation, &cfg.noise, &offsets, setup.seed, k).map_err(ctx)?;
                let x = s.true_error().map_err(ctx)?;
                (s.p, s.p_hat, x)
            }
            World::Dynamics(w) => {
                w.step(&graph, &offsets, &cfg.noise, setup.seed).map_err(ctx)?;
                let x = w.state.true_error().map_err(ctx)?;
                (w.state.p.clone(), w.state.p_hat.clone(), x)
            }
        };
        let mut yr = stream(setup.seed, Purpose::RangeNoise, k as u64);
        let y = model.emulate_ranges(&p, &cfg.noise, &mut yr).map_err(ctx)?;

        let mut max_dual: f64 = 0.0;
        let mut resets = 0;
        let mut failed = None;
        for _ in 0..cfg.solver.scp_rounds_per_step {
            match rt.outer_round(&p_hat, &y, &cfg.solver) {
                Ok(out) => {
                    max_dual = max_dual.max(out.max_dual_norm);
                    resets += out.resets.len();
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        let recon = rt.x_bar();
        if let Some(e) = failed {
            // Solver errors caused by a blown-up reconstruction count as divergence.
            if recon.is_finite() && diverged_at.is_none() {
                return Err(ctx(e));
            }
            diverged_at.get_or_insert(k);
            break;
        }
        let rmse = reconstruction_error(&x_true, &recon).map_err(ctx)?;
        let (mean_rmse, std_rmse) = mean_std(&rmse);
        if !recon.is_finite() || !mean_rmse.is_finite() {
            diverged_at.get_or_insert(k);
            break;
        }
        if mean_rmse > cfg.divergence_factor * setup.reference_norm {
            diverged_at.get_or_insert(k);
        }
        let report = evaluate(k, &recon, eps).map_err(ctx)?;
        let confirmed = tracker.update(&report);
        for l in latencies.iter_mut() {
            let ph = &setup.attack.phases[l.phase];
            if l.latency.is_none() && ph.contains(k) && confirmed.detected.contains(&l.robot) {
                l.latency = Some(k - l.onset);
            }
        }
        records.push(StepRecord {
            step: k,
            rmse,
            mean_rmse,
            std_rmse,
            report,
            confirmed: confirmed.detected,
            confirmed_alarm: confirmed.swarm_alarm,
            targets,
            max_dual_norm: max_dual,
            resets,
        });
    }

    Ok(TrialMetrics {
        seed: setup.seed,
        records,
        diverged: diverged_at.is_some(),
        diverged_at,
        reference_norm: setup.reference_norm,
        latencies,
    })
}
