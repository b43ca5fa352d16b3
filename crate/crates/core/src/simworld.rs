//! Ground-truth swarm: linear agent dynamics, local state estimators and a
//! consensus controller, plus a kinematic fast path that skips the dynamics.
//!
//! Per agent:
//!
//! ```text
//! p⁺ = A p + B u + E w          q = C p + F v + Γ f
//! p̂⁺ = A p̂ + B u + L_o (q − C p̂)
//! u  = K_c Σⱼ aᵢⱼ (p̂ᵢ − p̂ⱼ) + u_r(k)
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blockvec::{BlockLayout, BlockVec};
use crate::error::{Error, Result};
use crate::measurement::{sample_ball, NoiseConfig};
use crate::rng::{robot_stream, stream, Purpose};
use crate::topology::SwarmGraph;

/// Reference input u_r(k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceInput {
    #[default]
    Zero,
    Constant(Vec<f64>),
}

impl ReferenceInput {
    pub fn at(&self, _k: usize, dim: usize) -> Vec<f64> {
        match self {
            ReferenceInput::Zero => vec![0.0; dim],
            ReferenceInput::Constant(v) => v.clone(),
        }
    }
}

/// Linear agent model shared by every robot in the swarm.
///
/// `k_c` maps a state difference to an input (`u × n`).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub l_o: DMatrix<f64>,
    pub k_c: DMatrix<f64>,
    pub reference: ReferenceInput,
    /// Leading state components that are positions.
    pub pos_dim: usize,
}

fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Shape(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(name, "contains non-finite entries"));
    }
    Ok(())
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

impl AgentModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        e: DMatrix<f64>,
        f: DMatrix<f64>,
        gamma: DMatrix<f64>,
        l_o: DMatrix<f64>,
        k_c: DMatrix<f64>,
        reference: ReferenceInput,
        pos_dim: usize,
    ) -> Result<Self> {
        let model = Self {
            a,
            b,
            c,
            e,
            f,
            gamma,
            l_o,
            k_c,
            reference,
            pos_dim,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let u = self.b.ncols();
        let q = self.c.nrows();
        check_shape("A", &self.a, n, n)?;
        check_shape("B", &self.b, n, u)?;
        check_shape("C", &self.c, q, n)?;
        check_shape("E", &self.e, n, self.e.ncols())?;
        check_shape("F", &self.f, q, self.f.ncols())?;
        check_shape("Gamma", &self.gamma, q, self.gamma.ncols())?;
        check_shape("L_o", &self.l_o, n, q)?;
        check_shape("K_c", &self.k_c, u, n)?;
        if self.pos_dim == 0 || self.pos_dim > n {
            return Err(Error::invalid(
                "pos_dim",
                format!("must be in 1..={n}, got {}", self.pos_dim),
            ));
        }
        if let ReferenceInput::Constant(v) = &self.reference {
            if v.len() != u {
                return Err(Error::Shape(format!("u_r has length {}, expected {u}", v.len())));
            }
        }
        let closed = &self.a - &self.l_o * &self.c;
        let sr = spectral_radius(&closed);
        if !(sr < 1.0) {
            return Err(Error::invalid(
                "L_o",
                format!("A - L_o C is not Schur stable (spectral radius {sr})"),
            ));
        }
        Ok(())
    }

    /// Per-axis double integrator with position outputs, poles of `A − L_o C`
    /// at 0.7 and 0.8, and PD consensus gains.
    pub fn double_integrator(dim: usize, dt: f64, kp: f64, kv: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        let n = 2 * dim;
        let mut a = DMatrix::identity(n, n);
        let mut b = DMatrix::zeros(n, dim);
        let mut c = DMatrix::zeros(dim, n);
        let mut l_o = DMatrix::zeros(n, dim);
        let mut k_c = DMatrix::zeros(dim, n);
        for ax in 0..dim {
            a[(ax, dim + ax)] = dt;
            b[(ax, ax)] = 0.5 * dt * dt;
            b[(dim + ax, ax)] = dt;
            c[(ax, ax)] = 1.0;
            l_o[(ax, ax)] = 0.5;
            l_o[(dim + ax, ax)] = 0.06 / dt;
            k_c[(ax, ax)] = -kp;
            k_c[(ax, dim + ax)] = -kv;
        }
        Self::new(
            a,
            b,
            c,
            DMatrix::identity(n, n),
            DMatrix::identity(dim, dim),
            DMatrix::identity(dim, dim),
            l_o,
            k_c,
            ReferenceInput::Zero,
            dim,
        )
    }

    /// Steady-state estimate bias `(I − A + L_o C)⁻¹ L_o c` under a constant
    /// output offset `c` with no noise.
    pub fn steady_state_bias(&self, offset: &[f64]) -> Result<Vec<f64>> {
        let n = self.state_dim();
        let m = DMatrix::identity(n, n) - &self.a + &self.l_o * &self.c;
        let rhs = &self.l_o * DVector::from_column_slice(offset);
        let sol = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Invariant("I - A + L_o C is singular".into()))?;
        Ok(sol.iter().copied().collect())
    }
}

/// State of the whole swarm at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub k: usize,
    pub p: BlockVec,
    pub p_hat: BlockVec,
    pub q: BlockVec,
    pub u: BlockVec,
    pub f: BlockVec,
    /// Estimation error ν.
    pub nu: BlockVec,
}

impl SimState {
    /// All robots at `p0` with exact estimates.
    pub fn new(model: &AgentModel, p0: BlockVec) -> Result<Self> {
        let n = p0.num_blocks();
        let state = BlockLayout::uniform(n, model.state_dim())?;
        if p0.layout() != &state {
            return Err(Error::Shape("initial state does not match the model".into()));
        }
        let out = BlockLayout::uniform(n, model.output_dim())?;
        let inp = BlockLayout::uniform(n, model.input_dim())?;
        let fl = BlockLayout::uniform(n, model.gamma.ncols())?;
        Ok(Self {
            k: 0,
            p_hat: p0.clone(),
            nu: BlockVec::zeros(state),
            p: p0,
            q: BlockVec::zeros(out),
            u: BlockVec::zeros(inp),
            f: BlockVec::zeros(fl),
        })
    }

    /// True error `x = p + ν − p̂`.
    pub fn true_error(&self) -> Result<BlockVec> {
        self.p.add(&self.nu)?.sub(&self.p_hat)
    }
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> DVector<f64> {
    m * DVector::from_column_slice(v)
}

/// Advances the true states and draws the outputs `q` for step `k`.
///
/// `state.u` must already hold the inputs for this step.
pub fn step_dynamics(
    model: &AgentModel,
    state: &SimState,
    attack_f: &BlockVec,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<SimState> {
    if attack_f.layout() != state.f.layout() {
        return Err(Error::Shape("fault vector does not match the swarm".into()));
    }
    let mut next = state.clone();
    next.f = attack_f.clone();
    let k = state.k as u64;
    for i in 0..state.p.num_blocks() {
        let p = state.p.block(i);
        let mut wr = robot_stream(seed, Purpose::ProcessNoise, k, i as u64);
        let w = sample_ball(&mut wr, model.e.ncols(), noise.w_bound(i).sqrt());
        let mut vr = robot_stream(seed, Purpose::OutputNoise, k, i as u64);
        let v = sample_ball(&mut vr, model.f.ncols(), noise.v_bound(i).sqrt());
        let q = mat_vec(&model.c, p) + mat_vec(&model.f, &v) + mat_vec(&model.gamma, attack_f.block(i));
        next.q.set_block(i, q.as_slice())?;
        let p_next = mat_vec(&model.a, p) + mat_vec(&model.b, state.u.block(i)) + mat_vec(&model.e, &w);
        next.p.set_block(i, p_next.as_slice())?;
    }
    Ok(next)
}

/// One estimator step `p̂⁺ = A p̂ + B u + L_o (q − C p̂)` for every robot.
pub fn step_estimator(model: &AgentModel, state: &SimState) -> Result<BlockVec> {
    let mut out = state.p_hat.clone();
    for i in 0..state.p_hat.num_blocks() {
        out.set_block(i, estimator_update(model, state.p_hat.block(i), state.u.block(i), state.q.block(i)).as_slice())?;
    }
    Ok(out)
}

fn estimator_update(model: &AgentModel, p_hat: &[f64], u: &[f64], q: &[f64]) -> DVector<f64> {
    let innov = DVector::from_column_slice(q) - mat_vec(&model.c, p_hat);
    mat_vec(&model.a, p_hat) + mat_vec(&model.b, u) + &model.l_o * innov
}

/// `u[i] = K_c Σⱼ aᵢⱼ ((p̂ᵢ − rᵢ) − (p̂ⱼ − rⱼ)) + u_r(k)`, with formation
/// offsets `r` (zero when `None`).
pub fn consensus_input(
    model: &AgentModel,
    i: usize,
    p_hat: &BlockVec,
    g: &SwarmGraph,
    k: usize,
    formation: Option<&BlockVec>,
) -> Result<Vec<f64>> {
    let n = model.state_dim();
    if i >= p_hat.num_blocks() {
        return Err(Error::Index {
            what: "robot",
            index: i,
            len: p_hat.num_blocks(),
        });
    }
    if p_hat.num_blocks() != g.num_vertices() {
        return Err(Error::StaleData(format!(
            "estimates for {} robots, graph has {}",
            p_hat.num_blocks(),
            g.num_vertices()
        )));
    }
    let shifted = |j: usize| -> Vec<f64> {
        let mut v = p_hat.block(j).to_vec();
        if let Some(r) = formation {
            for (a, b) in v.iter_mut().zip(r.block(j)) {
                *a -= b;
            }
        }
        v
    };
    let own = shifted(i);
    let mut sum = vec![0.0; n];
    for j in g.neighbors(i)? {
        let other = shifted(j);
        for d in 0..n {
            sum[d] += own[d] - other[d];
        }
    }
    let mut u = mat_vec(&model.k_c, &sum);
    for (a, b) in u.iter_mut().zip(model.reference.at(k, model.input_dim())) {
        *a += b;
    }
    Ok(u.iter().copied().collect())
}

/// Full-dynamics simulation with a shadow estimator fed the unattacked
/// outputs, so `ν = p̂_shadow − p` is the noise-only estimation error.
#[derive(Debug, Clone)]
pub struct DynamicWorld {
    pub model: AgentModel,
    pub state: SimState,
    shadow: BlockVec,
    formation: Option<BlockVec>,
}

impl DynamicWorld {
    pub fn new(model: AgentModel, p0: BlockVec, formation: Option<BlockVec>) -> Result<Self> {
        let state = SimState::new(&model, p0)?;
        if let Some(r) = &formation {
            if r.layout() != state.p.layout() {
                return Err(Error::Shape("formation offsets do not match the state layout".into()));
            }
        }
        Ok(Self {
            shadow: state.p_hat.clone(),
            model,
            state,
            formation,
        })
    }

    /// Computes inputs, advances truth and both estimators by one step.
    pub fn step(&mut self, g: &SwarmGraph, attack_f: &BlockVec, noise: &NoiseConfig, seed: u64) -> Result<()> {
        let k = self.state.k;
        for i in 0..g.num_vertices() {
            let u = consensus_input(&self.model, i, &self.state.p_hat, g, k, self.formation.as_ref())?;
            self.state.u.set_block(i, &u)?;
        }
        let mut next = step_dynamics(&self.model, &self.state, attack_f, noise, seed)?;
        let mut shadow = self.shadow.clone();
        for i in 0..g.num_vertices() {
            let clean_q =
                DVector::from_column_slice(next.q.block(i)) - mat_vec(&self.model.gamma, attack_f.block(i));
            let s = estimator_update(&self.model, self.shadow.block(i), self.state.u.block(i), clean_q.as_slice());
            shadow.set_block(i, s.as_slice())?;
        }
        next.p_hat = step_estimator(&self.model, &next)?;
        next.k = k + 1;
        next.nu = shadow.sub(&next.p)?;
        self.shadow = shadow;
        self.state = next;
        Ok(())
    }
}

/// Static-formation step: `p = formation`, `p̂ = p + ν − x_inj` with
/// `‖ν‖₂ ≤ ν_max`, resampled from the `(seed, k)` stream.
pub fn kinematic_mode_step(
    formation: &BlockVec,
    noise: &NoiseConfig,
    offsets: &BlockVec,
    seed: u64,
    k: usize,
) -> Result<SimState> {
    if offsets.layout() != formation.layout() {
        return Err(Error::Shape("attack offsets do not match the formation".into()));
    }
    let layout = formation.layout().clone();
    let mut rng = stream(seed, Purpose::EstimationNoise, k as u64);
    let nu = BlockVec::from_flat(layout.clone(), sample_ball(&mut rng, layout.total_dim(), noise.nu_max))?;
    let p = formation.clone();
    let p_hat = p.add(&nu)?.sub(offsets)?;
    Ok(SimState {
        k,
        q: p_hat.clone(),
        u: BlockVec::zeros(layout.clone()),
        f: offsets.clone(),
        p,
        p_hat,
        nu,
    })
}

/// Robots placed uniformly in an axis-aligned box `[0, extent_d]`.
pub fn random_formation(n: usize, extents: &[f64], seed: u64) -> Result<BlockVec> {
    if extents.is_empty() || extents.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::invalid("formation.extents", "must be nonempty and positive"));
    }
    let dim = extents.len();
    let mut rng = stream(seed, Purpose::Formation, 0);
    let data = (0..n * dim).map(|k| rng.gen::<f64>() * extents[k % dim]).collect();
    BlockVec::from_flat(BlockLayout::uniform(n, dim)?, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_integrator(dim: usize) -> AgentModel {
        let i = DMatrix::identity(dim, dim);
        AgentModel::new(
            i.clone(),
            i.clone(),
            i.clone(),
            DMatrix::zeros(dim, dim),
            DMatrix::zeros(dim, dim),
            i.clone(),
            i.clone() * 0.5,
            i * -0.5,
            ReferenceInput::Zero,
            dim,
        )
        .unwrap()
    }

    #[test]
    fn identity_dynamics_hold_still() {
        let m = AgentModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 0.5,
            DMatrix::zeros(2, 2),
            ReferenceInput::Zero,
            2,
        )
        .unwrap();
        let p0 = BlockVec::from_blocks(&[[1.0, 2.0]]).unwrap();
        let s = SimState::new(&m, p0.clone()).unwrap();
        let f = BlockVec::zeros(s.f.layout().clone());
        let next = step_dynamics(&m, &s, &f, &NoiseConfig::noiseless(), 1).unwrap();
        assert_eq!(next.p, p0);
    }

    #[test]
    fn single_integrator_step() {
        let m = single_integrator(2);
        let mut s = SimState::new(&m, BlockVec::from_blocks(&[[0.0, 0.0]]).unwrap()).unwrap();
        s.u.set_block(0, &[1.0, 0.0]).unwrap();
        let f = BlockVec::zeros(s.f.layout().clone());
        let next = step_dynamics(&m, &s, &f, &NoiseConfig::noiseless(), 1).unwrap();
        assert_eq!(next.p.block(0), &[1.0, 0.0]);
    }

    #[test]
    fn output_spoof_is_additive() {
        let m = single_integrator(2);
        let s = SimState::new(&m, BlockVec::from_blocks(&[[1.0, 1.0]]).unwrap()).unwrap();
        let f = BlockVec::from_blocks(&[[0.5, -0.5]]).unwrap();
        let next = step_dynamics(&m, &s, &f, &NoiseConfig::noiseless(), 1).unwrap();
        assert_eq!(next.q.block(0), &[1.5, 0.5]);
    }

    #[test]
    fn zero_innovation() {
        let m = single_integrator(1);
        let mut s = SimState::new(&m, BlockVec::from_blocks(&[[2.0]]).unwrap()).unwrap();
        s.q = s.p_hat.clone();
        s.u.set_block(0, &[0.5]).unwrap();
        assert_eq!(step_estimator(&m, &s).unwrap().block(0), &[2.5]);
    }

    #[test]
    fn consensus_two_agents() {
        let m = single_integrator(1);
        let g = SwarmGraph::path(2).unwrap();
        let p_hat = BlockVec::from_blocks(&[[0.0], [2.0]]).unwrap();
        assert_eq!(consensus_input(&m, 0, &p_hat, &g, 0, None).unwrap(), vec![1.0]);
    }

    #[test]
    fn consensus_at_agreement_returns_reference() {
        let mut m = single_integrator(2);
        m.reference = ReferenceInput::Constant(vec![0.3, -0.1]);
        let g = SwarmGraph::complete(3).unwrap();
        let p_hat = BlockVec::from_blocks(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
        for i in 0..3 {
            assert_eq!(consensus_input(&m, i, &p_hat, &g, 7, None).unwrap(), vec![0.3, -0.1]);
        }
    }

    #[test]
    fn rejects_unstable_estimator() {
        let i = DMatrix::identity(1, 1);
        let r = AgentModel::new(
            i.clone() * 1.5,
            i.clone(),
            i.clone(),
            i.clone(),
            i.clone(),
            i.clone(),
            i.clone() * 0.1,
            i.clone(),
            ReferenceInput::Zero,
            1,
        );
        assert!(matches!(r, Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn rejects_bad_shapes() {
        let i = DMatrix::identity(2, 2);
        let r = AgentModel::new(
            i.clone(),
            DMatrix::identity(3, 3),
            i.clone(),
            i.clone(),
            i.clone(),
            i.clone(),
            i.clone() * 0.5,
            i.clone(),
            ReferenceInput::Zero,
            2,
        );
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn double_integrator_poles() {
        let m = AgentModel::double_integrator(3, 0.1, 0.25, 0.5).unwrap();
        let sr = spectral_radius(&(&m.a - &m.l_o * &m.c));
        assert!((sr - 0.8).abs() < 1e-6, "{sr}");
    }

    #[test]
    fn kinematic_step_without_attack() {
        let f = BlockVec::from_blocks(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]).unwrap();
        let z = BlockVec::zeros(f.layout().clone());
        let s = kinematic_mode_step(&f, &NoiseConfig::noiseless(), &z, 3, 0).unwrap();
        assert_eq!(s.p_hat, s.p);
        assert_eq!(s.true_error().unwrap().norm2(), 0.0);
    }

    #[test]
    fn kinematic_step_recovers_offset() {
        let f = random_formation(5, &[10.0, 10.0, 3.0], 1).unwrap();
        let mut x = BlockVec::zeros(f.layout().clone());
        x.set_block(3, &[1.0, 0.0, 0.0]).unwrap();
        let s = kinematic_mode_step(&f, &NoiseConfig::noiseless(), &x, 3, 0).unwrap();
        let e = s.true_error().unwrap();
        assert!(e.sub(&x).unwrap().norm2() < 1e-15);

        let noise = NoiseConfig::default();
        for k in 0..50 {
            let s = kinematic_mode_step(&f, &noise, &x, 3, k).unwrap();
            assert!(s.true_error().unwrap().sub(&x).unwrap().norm2() <= 0.02 + 1e-12);
        }
    }
}
