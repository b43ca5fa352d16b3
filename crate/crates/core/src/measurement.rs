//! Inter-robot range model, its Jacobian, and noisy range emulation.
//!
//! Emulation mirrors a pose-sources → range-topic pipeline: any number of
//! [`PoseSource`]s contribute robot positions, and [`RangeEmulator`]
//! publishes one noisy range per edge.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blockvec::{l2, BlockLayout, BlockVec};
use crate::error::{Error, Result};
use crate::topology::SwarmGraph;

/// Shortest edge for which the range gradient is evaluated.
pub const MIN_EDGE_LENGTH: f64 = 1e-6;

/// How the stacked range noise ω is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseDistribution {
    /// Uniform in the ball ‖ω‖₂ ≤ ω_max.
    #[default]
    UniformBall,
    /// Independent uniform entries in `[-ω_max/√m, ω_max/√m]`.
    PerEdgeUniform,
}

/// Noise bounds for the simulated swarm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Bound on the stacked range noise ‖ω‖₂.
    pub omega_max: f64,
    /// Bound on the stacked estimation error ‖ν‖₂.
    pub nu_max: f64,
    /// Per-agent bounds Wᵢ on ‖w[i]‖₂²; the last entry repeats for missing agents.
    pub w_bounds: Vec<f64>,
    /// Per-agent bounds Vᵢ on ‖v[i]‖₂²; the last entry repeats for missing agents.
    pub v_bounds: Vec<f64>,
    pub distribution: NoiseDistribution,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            omega_max: 0.02,
            nu_max: 0.02,
            w_bounds: vec![0.0],
            v_bounds: vec![0.0],
            distribution: NoiseDistribution::UniformBall,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            omega_max: 0.0,
            nu_max: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")))
            }
        };
        check("noise.omega_max", self.omega_max)?;
        check("noise.nu_max", self.nu_max)?;
        for &w in &self.w_bounds {
            check("noise.w_bounds", w)?;
        }
        for &v in &self.v_bounds {
            check("noise.v_bounds", v)?;
        }
        Ok(())
    }

    pub fn w_bound(&self, agent: usize) -> f64 {
        per_agent(&self.w_bounds, agent)
    }

    pub fn v_bound(&self, agent: usize) -> f64 {
        per_agent(&self.v_bounds, agent)
    }
}

fn per_agent(v: &[f64], agent: usize) -> f64 {
    v.get(agent).or(v.last()).copied().unwrap_or(0.0)
}

/// Uniform sample from the `dim`-ball of the given radius.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    if dim == 0 || radius == 0.0 {
        return vec![0.0; dim];
    }
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = l2(&v);
    let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
    let scale = if n > 0.0 { r / n } else { 0.0 };
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

/// Draws a stacked noise vector of length `dim` whose ℓ₂ norm is at most `bound`.
pub fn sample_bounded<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    bound: f64,
    distribution: NoiseDistribution,
) -> Vec<f64> {
    match distribution {
        NoiseDistribution::UniformBall => sample_ball(rng, dim, bound),
        NoiseDistribution::PerEdgeUniform => {
            if dim == 0 || bound == 0.0 {
                return vec![0.0; dim];
            }
            let half = bound / (dim as f64).sqrt();
            (0..dim).map(|_| rng.gen_range(-half..=half)).collect()
        }
    }
}

/// Range measurement model Φ over a graph.
#[derive(Debug, Clone)]
pub struct RangeModel {
    graph: SwarmGraph,
    robot_layout: BlockLayout,
    edge_layout: BlockLayout,
    pos_dim: usize,
}

/// One row of the range Jacobian: `R[l, i] = dir`, `R[l, j] = -dir` on the
/// position components of robots `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianRow {
    pub i: usize,
    pub j: usize,
    pub dir: Vec<f64>,
}

/// Sparse block range Jacobian (rows by edge, column blocks by robot).
#[derive(Debug, Clone)]
pub struct RangeJacobian {
    rows: Vec<JacobianRow>,
    robot_layout: BlockLayout,
}

impl RangeJacobian {
    pub fn rows(&self) -> &[JacobianRow] {
        &self.rows
    }

    /// Block `R[l, robot]` padded to the robot's full state dimension.
    pub fn block(&self, l: usize, robot: usize) -> Vec<f64> {
        let row = &self.rows[l];
        let mut out = vec![0.0; self.robot_layout.block_dim(robot)];
        let sign = if robot == row.i {
            1.0
        } else if robot == row.j {
            -1.0
        } else {
            return out;
        };
        for (o, d) in out.iter_mut().zip(&row.dir) {
            *o = sign * d;
        }
        out
    }

    /// `R Δ` for a robot-layout perturbation.
    pub fn apply(&self, delta: &BlockVec) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                r.dir
                    .iter()
                    .enumerate()
                    .map(|(k, d)| d * (delta.block(r.i)[k] - delta.block(r.j)[k]))
                    .sum()
            })
            .collect()
    }

    /// Dense `m × n` matrix, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.rows.len())
            .map(|l| {
                (0..self.robot_layout.num_blocks())
                    .flat_map(|r| self.block(l, r))
                    .collect()
            })
            .collect()
    }
}

/// Range and unit direction from `pj` to `pi`, i.e. `(‖pi − pj‖, (pi − pj)/‖pi − pj‖)`.
pub fn range_and_direction(pi: &[f64], pj: &[f64]) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = pi.iter().zip(pj).map(|(a, b)| a - b).collect();
    let r = l2(&diff);
    let dir = if r > 0.0 {
        diff.iter().map(|d| d / r).collect()
    } else {
        vec![0.0; diff.len()]
    };
    (r, dir)
}

impl RangeModel {
    /// Model over `graph` for robots whose state blocks are `robot_layout`;
    /// the first `pos_dim` components of each block are the position.
    pub fn new(graph: SwarmGraph, robot_layout: BlockLayout, pos_dim: usize) -> Result<Self> {
        if !(2..=3).contains(&pos_dim) {
            return Err(Error::invalid("dim", format!("position dimension must be 2 or 3, got {pos_dim}")));
        }
        if robot_layout.num_blocks() != graph.num_vertices() {
            return Err(Error::Shape(format!(
                "layout has {} blocks, graph has {} robots",
                robot_layout.num_blocks(),
                graph.num_vertices()
            )));
        }
        if let Some(i) = robot_layout.block_dims().iter().position(|&d| d < pos_dim) {
            return Err(Error::Shape(format!(
                "robot {i} state has fewer than {pos_dim} components"
            )));
        }
        let edge_layout = BlockLayout::uniform(graph.num_edges(), 1)?;
        Ok(Self {
            graph,
            robot_layout,
            edge_layout,
            pos_dim,
        })
    }

    pub fn graph(&self) -> &SwarmGraph {
        &self.graph
    }

    pub fn robot_layout(&self) -> &BlockLayout {
        &self.robot_layout
    }

    pub fn edge_layout(&self) -> &BlockLayout {
        &self.edge_layout
    }

    pub fn pos_dim(&self) -> usize {
        self.pos_dim
    }

    /// Measurement dimension m = |ℰ| (one range per edge).
    pub fn num_measurements(&self) -> usize {
        self.graph.num_edges()
    }

    fn check(&self, p: &BlockVec) -> Result<()> {
        if p.layout() != &self.robot_layout {
            return Err(Error::Shape(format!(
                "state layout {:?} does not match model layout {:?}",
                p.layout().block_dims(),
                self.robot_layout.block_dims()
            )));
        }
        Ok(())
    }

    fn pos<'a>(&self, p: &'a BlockVec, i: usize) -> &'a [f64] {
        &p.block(i)[..self.pos_dim]
    }

    /// Φ(p): one Euclidean range per edge.
    pub fn phi(&self, p: &BlockVec) -> Result<BlockVec> {
        self.check(p)?;
        let data = self
            .graph
            .edges()
            .iter()
            .map(|&(i, j)| range_and_direction(self.pos(p, i), self.pos(p, j)).0)
            .collect();
        BlockVec::from_flat(self.edge_layout.clone(), data)
    }

    /// Range Jacobian at `p`.
    pub fn jacobian(&self, p: &BlockVec) -> Result<RangeJacobian> {
        self.check(p)?;
        let mut rows = Vec::with_capacity(self.graph.num_edges());
        for (l, &(i, j)) in self.graph.edges().iter().enumerate() {
            let (r, dir) = range_and_direction(self.pos(p, i), self.pos(p, j));
            if !(r >= MIN_EDGE_LENGTH) {
                return Err(Error::DegenerateGeometry {
                    edge: l,
                    i,
                    j,
                    length: r,
                    min_length: MIN_EDGE_LENGTH,
                });
            }
            rows.push(JacobianRow { i, j, dir });
        }
        Ok(RangeJacobian {
            rows,
            robot_layout: self.robot_layout.clone(),
        })
    }

    /// ŷ = Φ(p_true) + ω with ‖ω‖₂ ≤ ω_max.
    pub fn emulate_ranges<R: Rng + ?Sized>(
        &self,
        p_true: &BlockVec,
        noise: &NoiseConfig,
        rng: &mut R,
    ) -> Result<BlockVec> {
        let mut y = self.phi(p_true)?;
        let omega = sample_bounded(
            rng,
            self.graph.num_edges(),
            noise.omega_max,
            noise.distribution,
        );
        for (v, w) in y.as_mut_slice().iter_mut().zip(omega) {
            *v += w;
        }
        Ok(y)
    }
}

/// Anything that can report the current position of some robots.
pub trait PoseSource {
    /// `(robot id, position)` pairs this source tracks.
    fn poses(&self) -> Vec<(usize, Vec<f64>)>;
}

/// Fixed set of poses, e.g. a formation or a tracked subset of robots.
#[derive(Debug, Clone)]
pub struct StaticPoses(pub Vec<(usize, Vec<f64>)>);

impl PoseSource for StaticPoses {
    fn poses(&self) -> Vec<(usize, Vec<f64>)> {
        self.0.clone()
    }
}

/// Merges pose sources and publishes noisy ranges for every edge.
pub struct RangeEmulator<'a> {
    model: &'a RangeModel,
    sources: Vec<&'a dyn PoseSource>,
}

impl<'a> RangeEmulator<'a> {
    pub fn new(model: &'a RangeModel) -> Self {
        Self {
            model,
            sources: Vec::new(),
        }
    }

    pub fn with_source(mut self, source: &'a dyn PoseSource) -> Self {
        self.sources.push(source);
        self
    }

    /// Collects every robot's pose; each robot must be reported exactly once.
    pub fn gather(&self) -> Result<BlockVec> {
        let layout = self.model.robot_layout().clone();
        let n = layout.num_blocks();
        let mut p = BlockVec::zeros(layout);
        let mut seen = vec![false; n];
        for src in &self.sources {
            for (id, pos) in src.poses() {
                if id >= n {
                    return Err(Error::Index {
                        what: "robot",
                        index: id,
                        len: n,
                    });
                }
                if seen[id] {
                    return Err(Error::Config(format!("robot {id} reported by two pose sources")));
                }
                seen[id] = true;
                let block = p.block_mut(id);
                if pos.len() > block.len() {
                    return Err(Error::Shape(format!("pose of robot {id} has {} components", pos.len())));
                }
                block[..pos.len()].copy_from_slice(&pos);
            }
        }
        if let Some(id) = seen.iter().position(|s| !s) {
            return Err(Error::StaleData(format!("no pose source reports robot {id}")));
        }
        Ok(p)
    }

    pub fn publish<R: Rng + ?Sized>(&self, noise: &NoiseConfig, rng: &mut R) -> Result<BlockVec> {
        let p = self.gather()?;
        self.model.emulate_ranges(&p, noise, rng)
    }
}
