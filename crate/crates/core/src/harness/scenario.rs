use serde::{Deserialize, Serialize};

use crate::attack::AttackSchedule;
use crate::error::{Error, Result};
use crate::measurement::NoiseConfig;
use crate::solver::{SolverConfig, StartMode};
use crate::topology::GraphDescription;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Static formation, `p̂ = p + ν − x_inj`.
    #[default]
    Kinematic,
    /// Double-integrator agents with estimators and consensus control.
    Dynamics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub mode: SimMode,
    pub dt: f64,
    pub kp: f64,
    pub kv: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: SimMode::Kinematic,
            dt: 0.1,
            kp: 0.25,
            kv: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormationConfig {
    /// Box side lengths; robots are drawn uniformly inside it per trial.
    pub extents: Vec<f64>,
    /// Fixed positions, overriding the random draw.
    pub positions: Option<Vec<Vec<f64>>>,
}

impl Default for FormationConfig {
    fn default() -> Self {
        Self {
            extents: vec![10.0, 10.0, 3.0],
            positions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySwitch {
    pub start: usize,
    pub graph: GraphDescription,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Target mean degree for the random geometric graph.
    pub mean_degree: f64,
    /// Fixed communication radius, overriding `mean_degree`.
    pub radius: Option<f64>,
    /// Explicit initial graph, overriding the geometric construction.
    pub graph: Option<GraphDescription>,
    /// Later graph changes.
    pub switches: Vec<TopologySwitch>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            mean_degree: 8.0,
            radius: None,
            graph: None,
            switches: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackWindow {
    pub start: usize,
    pub end: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Randomly targeted windows, redrawn per trial.
    pub windows: Vec<AttackWindow>,
    pub magnitude: f64,
    /// Targets of different windows never coincide.
    pub disjoint: bool,
    /// Explicit schedule, overriding `windows`.
    pub schedule: Option<AttackSchedule>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            windows: Vec::new(),
            magnitude: 1.0,
            disjoint: true,
            schedule: None,
        }
    }
}

/// Full description of one experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_agents: usize,
    /// Position dimension (2 or 3).
    pub dimension: usize,
    pub sim: SimConfig,
    pub formation: FormationConfig,
    pub topology: TopologyConfig,
    pub noise: NoiseConfig,
    pub solver: SolverConfig,
    pub attack: AttackConfig,
    pub steps: usize,
    pub trials: usize,
    pub master_seed: u64,
    /// Consecutive steps above ε before a detection is confirmed.
    pub confirm_steps: usize,
    /// Divergence when mean RMSE exceeds this multiple of the reference norm.
    pub divergence_factor: f64,
    /// Run solver nodes concurrently within a trial.
    pub parallel_nodes: bool,
    /// Emit per-robot RMSE columns in trial CSVs.
    pub per_robot_columns: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            n_agents: 20,
            dimension: 3,
            sim: SimConfig::default(),
            formation: FormationConfig::default(),
            topology: TopologyConfig::default(),
            noise: NoiseConfig::default(),
            solver: SolverConfig::default(),
            attack: AttackConfig::default(),
            steps: 200,
            trials: 20,
            master_seed: 0,
            confirm_steps: 3,
            divergence_factor: 10.0,
            parallel_nodes: false,
            per_robot_columns: false,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn epsilon(&self) -> f64 {
        self.solver.resolved_epsilon(self.noise.nu_max, self.noise.omega_max)
    }

    /// Seed of trial `t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.master_seed.wrapping_add(t as u64)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_agents;
        if n < 2 {
            return Err(Error::invalid("n_agents", format!("must be >= 2, got {n}")));
        }
        if !(2..=3).contains(&self.dimension) {
            return Err(Error::invalid(
                "dimension",
                format!("must be 2 or 3, got {}", self.dimension),
            ));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be >= 1"));
        }
        if self.confirm_steps == 0 {
            return Err(Error::invalid("confirm_steps", "must be >= 1"));
        }
        if !(self.divergence_factor > 0.0) {
            return Err(Error::invalid("divergence_factor", "must be > 0"));
        }
        self.noise.validate()?;
        self.solver.validate()?;
        if self.sim.mode == SimMode::Dynamics {
            for (name, v) in [("sim.dt", self.sim.dt), ("sim.kp", self.sim.kp), ("sim.kv", self.sim.kv)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::invalid(name, format!("must be > 0, got {v}")));
                }
            }
        }
        match &self.formation.positions {
            Some(pos) => {
                if pos.len() != n || pos.iter().any(|p| p.len() != self.dimension) {
                    return Err(Error::invalid(
                        "formation.positions",
                        format!("need {n} positions of dimension {}", self.dimension),
                    ));
                }
                if pos.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("formation.positions", "non-finite coordinate"));
                }
            }
            None => {
                if self.formation.extents.len() != self.dimension {
                    return Err(Error::invalid(
                        "formation.extents",
                        format!("need {} extents, got {}", self.dimension, self.formation.extents.len()),
                    ));
                }
                if self.formation.extents.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return Err(Error::invalid("formation.extents", "must be positive"));
                }
            }
        }
        let t = &self.topology;
        if t.graph.is_none() {
            if let Some(r) = t.radius {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(Error::invalid("topology.radius", format!("must be > 0, got {r}")));
                }
            } else if !(t.mean_degree > 0.0 && t.mean_degree <= (n - 1) as f64) {
                return Err(Error::invalid(
                    "topology.mean_degree",
                    format!("must be in (0, {}], got {}", n - 1, t.mean_degree),
                ));
            }
        }
        for g in t.graph.iter().chain(t.switches.iter().map(|s| &s.graph)) {
            if g.n != n {
                return Err(Error::invalid(
                    "topology.graph",
                    format!("graph has {} robots, scenario has {n}", g.n),
                ));
            }
        }
        let a = &self.attack;
        if !(a.magnitude >= 0.0 && a.magnitude.is_finite()) {
            return Err(Error::invalid("attack.magnitude", "must be finite and >= 0"));
        }
        for w in &a.windows {
            if w.start >= w.end {
                return Err(Error::invalid("attack.windows", format!("start {} must be < end {}", w.start, w.end)));
            }
            if w.count == 0 || w.count > n {
                return Err(Error::invalid("attack.windows", format!("count must be in 1..={n}")));
            }
        }
        if a.disjoint && a.windows.iter().map(|w| w.count).sum::<usize>() > n {
            return Err(Error::invalid("attack.windows", "disjoint targets exceed the swarm size"));
        }
        if let Some(s) = &a.schedule {
            let layout = crate::blockvec::BlockLayout::uniform(n, self.dimension)?;
            s.validate(&layout)?;
        }
        Ok(())
    }
}

/// Command-line style overrides applied after loading.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub rho: Option<f64>,
    pub omega_max: Option<f64>,
    pub nu_max: Option<f64>,
    pub start: Option<StartMode>,
    pub steps: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(v) = self.rho {
            cfg.solver.rho = v;
        }
        if let Some(v) = self.omega_max {
            cfg.noise.omega_max = v;
        }
        if let Some(v) = self.nu_max {
            cfg.noise.nu_max = v;
        }
        if let Some(v) = self.start {
            cfg.solver.start = v;
        }
        if let Some(v) = self.steps {
            if cfg.steps != v {
                for w in &mut cfg.attack.windows {
                    if w.end == cfg.steps {
                        w.end = v;
                    }
                }
            }
            cfg.steps = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
    }
}

/// A named scenario and its variants.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    pub variants: Vec<ScenarioConfig>,
}

pub const SCENARIO_NAMES: &[&str] = &[
    "noise-i",
    "noise-ii",
    "noise-iii",
    "noise-iv",
    "noise-study",
    "rho-sweep",
    "two-phase",
    "mr7",
    "nominal",
];

fn noise_config(label: &str, rho: f64, omega: f64) -> ScenarioConfig {
    let steps = 200;
    ScenarioConfig {
        name: label.into(),
        noise: NoiseConfig {
            omega_max: omega,
            nu_max: 0.02,
            ..NoiseConfig::default()
        },
        solver: SolverConfig {
            rho,
            ..SolverConfig::default()
        },
        attack: AttackConfig {
            windows: vec![AttackWindow {
                start: 0,
                end: steps,
                count: 6,
            }],
            ..AttackConfig::default()
        },
        steps,
        ..ScenarioConfig::default()
    }
}

const NOISE_GRID: [(&str, f64, f64); 4] = [
    ("noise-i", 0.25, 0.02),
    ("noise-ii", 0.25, 0.05),
    ("noise-iii", 1.25, 0.02),
    ("noise-iv", 1.25, 0.05),
];

fn two_phase_config(rho: f64, start: StartMode) -> ScenarioConfig {
    let steps = 300;
    ScenarioConfig {
        name: format!("two-phase/rho{rho}-{}", start.as_str()),
        solver: SolverConfig {
            rho,
            start,
            ..SolverConfig::default()
        },
        attack: AttackConfig {
            windows: vec![
                AttackWindow {
                    start: 20,
                    end: 150,
                    count: 3,
                },
                AttackWindow {
                    start: 150,
                    end: steps,
                    count: 3,
                },
            ],
            ..AttackConfig::default()
        },
        steps,
        ..ScenarioConfig::default()
    }
}

/// Built-in scenario by name.
pub fn named_scenario(name: &str) -> Result<Scenario> {
    let s = match name {
        n if NOISE_GRID.iter().any(|g| g.0 == n) => {
            let (label, rho, omega) = *NOISE_GRID.iter().find(|g| g.0 == n).unwrap();
            Scenario {
                name: label,
                description: "20 robots, 6 spoofed by 1.0 for the whole run",
                variants: vec![noise_config(label, rho, omega)],
            }
        }
        "noise-study" => Scenario {
            name: "noise-study",
            description: "the four noise/penalty configurations side by side",
            variants: NOISE_GRID
                .iter()
                .map(|(l, r, o)| noise_config(&format!("noise-study/{}", &l[6..]), *r, *o))
                .collect(),
        },
        "rho-sweep" => {
            let mut variants = Vec::new();
            for omega in [0.02, 0.05] {
                for rho in [0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5] {
                    let mut c = noise_config(&format!("rho-sweep/omega{omega}-rho{rho}"), rho, omega);
                    c.trials = 100;
                    variants.push(c);
                }
            }
            Scenario {
                name: "rho-sweep",
                description: "penalty sweep at two range-noise levels, 100 trials each",
                variants,
            }
        }
        "two-phase" => Scenario {
            name: "two-phase",
            description: "two disjoint 3-robot attack phases, warm versus cold start",
            variants: vec![
                two_phase_config(0.25, StartMode::Warm),
                two_phase_config(0.25, StartMode::Cold),
                two_phase_config(0.75, StartMode::Warm),
                two_phase_config(0.75, StartMode::Cold),
            ],
        },
        "mr7" => {
            let steps = 200;
            Scenario {
                name: "mr7",
                description: "7 robots in a small volume, 2 spoofed after takeoff",
                variants: vec![ScenarioConfig {
                    name: "mr7".into(),
                    n_agents: 7,
                    formation: FormationConfig {
                        extents: vec![4.0, 4.0, 1.5],
                        positions: None,
                    },
                    topology: TopologyConfig {
                        mean_degree: 6.0,
                        ..TopologyConfig::default()
                    },
                    attack: AttackConfig {
                        windows: vec![AttackWindow {
                            start: 20,
                            end: steps,
                            count: 2,
                        }],
                        ..AttackConfig::default()
                    },
                    steps,
                    ..ScenarioConfig::default()
                }],
            }
        }
        "nominal" => Scenario {
            name: "nominal",
            description: "20 robots, no attack, 100 trials",
            variants: vec![ScenarioConfig {
                name: "nominal".into(),
                trials: 100,
                ..ScenarioConfig::default()
            }],
        },
        other => {
            return Err(Error::Config(format!(
                "unknown scenario `{other}` (known: {})",
                SCENARIO_NAMES.join(", ")
            )))
        }
    };
    for v in &s.variants {
        v.validate()?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_named_scenarios_validate() {
        for name in SCENARIO_NAMES {
            let s = named_scenario(name).unwrap();
            assert!(!s.variants.is_empty());
        }
        assert!(named_scenario("nope").is_err());
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let cfg = named_scenario("two-phase").unwrap().variants[2].clone();
        let back = ScenarioConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, back);
        let partial = ScenarioConfig::from_json(r#"{"n_agents": 12, "solver": {"rho": 0.5}}"#).unwrap();
        assert_eq!(partial.solver.n_admm, 10);
        assert_eq!(partial.solver.rho, 0.5);
    }

    #[test]
    fn validation_names_field() {
        let err = ScenarioConfig::from_json(r#"{"solver": {"rho": -1.0}}"#).unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("solver.rho"), "{err}");
        assert!(ScenarioConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let err = ScenarioConfig::from_json(r#"{"dimension": 4}"#).unwrap_err();
        assert!(err.to_string().contains("dimension"));
    }

    #[test]
    fn steps_override_stretches_open_windows() {
        let mut cfg = named_scenario("noise-i").unwrap().variants[0].clone();
        Overrides {
            steps: Some(50),
            rho: Some(0.5),
            ..Overrides::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.steps, 50);
        assert_eq!(cfg.attack.windows[0].end, 50);
        assert_eq!(cfg.solver.rho, 0.5);
    }
}
