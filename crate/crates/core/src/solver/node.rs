use nalgebra::{DMatrix, DVector};

use super::prox::solve_norm_prox;
use super::{SolverConfig, StartMode};
use crate::blockvec::{dot, l2};
use crate::error::{Error, Result};
use crate::measurement::{range_and_direction, MIN_EDGE_LENGTH};

/// What robot `i` knows about a neighbor when it linearizes.
#[derive(Debug, Clone, Copy)]
pub struct NeighborPose<'a> {
    pub p_hat: &'a [f64],
    pub x_bar: &'a [f64],
    /// Measured range on the edge to this neighbor.
    pub y_hat: f64,
}

/// Local linearization of one incident edge: `z[l]`, `R[l, i]`, `R[l, j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedEdge {
    pub edge: usize,
    pub z: f64,
    pub r_self: Vec<f64>,
    pub r_nbr: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Slot {
    id: usize,
    edge: usize,
    dim: usize,
    /// Copy of x̄[j].
    x_bar: Vec<f64>,
    /// Latest x̂*[j] received.
    x_hat: Vec<f64>,
    /// μⱼ⁽ⁱ⁾ received with x̂*[j].
    mu_recv: Vec<f64>,
    /// ŵⱼ⁽ⁱ⁾, computed here.
    w_mine: Vec<f64>,
    /// ŵᵢ⁽ʲ⁾, received from j.
    w_recv: Vec<f64>,
    lambda: f64,
    /// μᵢ⁽ʲ⁾.
    mu: Vec<f64>,
    lin: Option<LinearizedEdge>,
    x_fresh: bool,
    w_fresh: bool,
}

impl Slot {
    fn new(id: usize, edge: usize, dim: usize, own_dim: usize) -> Self {
        Self {
            id,
            edge,
            dim,
            x_bar: vec![0.0; dim],
            x_hat: vec![0.0; dim],
            mu_recv: vec![0.0; dim],
            w_mine: vec![0.0; dim],
            w_recv: vec![0.0; own_dim],
            lambda: 0.0,
            mu: vec![0.0; own_dim],
            lin: None,
            x_fresh: false,
            w_fresh: false,
        }
    }

    fn lin(&self, owner: usize) -> Result<&LinearizedEdge> {
        self.lin.as_ref().ok_or_else(|| {
            Error::StaleData(format!(
                "robot {owner} has no linearization for edge {} this round",
                self.edge
            ))
        })
    }
}

/// ADMM state owned by one robot. Every buffer is sized by the robot's own
/// state dimension and its neighbor count; nothing depends on swarm size.
#[derive(Debug, Clone)]
pub struct SolverNode {
    id: usize,
    dim: usize,
    pos_dim: usize,
    x_bar: Vec<f64>,
    x_hat: Vec<f64>,
    slots: Vec<Slot>,
    cold_start_flag: bool,
    resets: u64,
}

impl SolverNode {
    /// `neighbors` lists `(neighbor id, edge id, neighbor state dimension)`.
    pub fn new(id: usize, dim: usize, pos_dim: usize, neighbors: &[(usize, usize, usize)]) -> Result<Self> {
        if dim < pos_dim {
            return Err(Error::Shape(format!(
                "robot {id} state dimension {dim} is below position dimension {pos_dim}"
            )));
        }
        let mut node = Self {
            id,
            dim,
            pos_dim,
            x_bar: vec![0.0; dim],
            x_hat: vec![0.0; dim],
            slots: Vec::new(),
            cold_start_flag: false,
            resets: 0,
        };
        node.set_neighbors(neighbors)?;
        Ok(node)
    }

    /// Replaces the neighbor set, keeping multipliers and copies for neighbors
    /// joined by the same edge as before.
    pub fn set_neighbors(&mut self, neighbors: &[(usize, usize, usize)]) -> Result<()> {
        if neighbors.is_empty() {
            return Err(Error::invalid("graph", format!("robot {} has no neighbors", self.id)));
        }
        let mut sorted = neighbors.to_vec();
        sorted.sort_by_key(|n| n.0);
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) || sorted.iter().any(|n| n.0 == self.id) {
            return Err(Error::invalid("graph", format!("bad neighbor list for robot {}", self.id)));
        }
        let old = std::mem::take(&mut self.slots);
        self.slots = sorted
            .into_iter()
            .map(|(j, edge, dim)| {
                old.iter()
                    .find(|s| s.id == j && s.edge == edge && s.dim == dim)
                    .cloned()
                    .unwrap_or_else(|| Slot::new(j, edge, dim, self.dim))
            })
            .collect();
        Ok(())
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.slots.len()
    }

    pub fn neighbor_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().map(|s| s.id)
    }

    /// Accumulated error x̄[i].
    pub fn x_bar(&self) -> &[f64] {
        &self.x_bar
    }

    /// Current local primal x̂*[i].
    pub fn x_hat(&self) -> &[f64] {
        &self.x_hat
    }

    /// Reconstructed error x̂[i] + x̄[i].
    pub fn reconstruction(&self) -> Vec<f64> {
        self.x_hat.iter().zip(&self.x_bar).map(|(a, b)| a + b).collect()
    }

    /// Robot integrity χ̂ᵢ = ‖x̂[i] + x̄[i]‖₂.
    pub fn integrity(&self) -> f64 {
        l2(&self.reconstruction())
    }

    /// This node's copy of x̄[j].
    pub fn neighbor_x_bar(&self, j: usize) -> Option<&[f64]> {
        self.slot_index(j).map(|k| self.slots[k].x_bar.as_slice())
    }

    /// λᵢ⁽ˡ⁾ for incident edge `edge`.
    pub fn lambda(&self, edge: usize) -> Option<f64> {
        self.slots.iter().find(|s| s.edge == edge).map(|s| s.lambda)
    }

    /// μᵢ⁽ʲ⁾ for neighbor `j`.
    pub fn mu(&self, j: usize) -> Option<&[f64]> {
        self.slot_index(j).map(|k| self.slots[k].mu.as_slice())
    }

    /// ŵⱼ⁽ⁱ⁾ computed by this node.
    pub fn w_copy(&self, j: usize) -> Option<&[f64]> {
        self.slot_index(j).map(|k| self.slots[k].w_mine.as_slice())
    }

    pub fn linearization(&self) -> impl Iterator<Item = Option<&LinearizedEdge>> + '_ {
        self.slots.iter().map(|s| s.lin.as_ref())
    }

    pub fn cold_start_flag(&self) -> bool {
        self.cold_start_flag
    }

    /// Number of times multipliers were reset.
    pub fn resets(&self) -> u64 {
        self.resets
    }

    /// Largest block multiplier norm held by this node.
    pub fn max_dual_norm(&self) -> f64 {
        self.slots
            .iter()
            .map(|s| s.lambda.abs().max(l2(&s.mu)))
            .fold(0.0, f64::max)
    }

    fn slot_index(&self, j: usize) -> Option<usize> {
        self.slots.binary_search_by_key(&j, |s| s.id).ok()
    }

    fn slot_for(&self, j: usize) -> Result<usize> {
        self.slot_index(j).ok_or_else(|| {
            Error::StaleData(format!("robot {} received data from non-neighbor {j}", self.id))
        })
    }

    /// Overwrites this node's copy of x̄[j] (outer-round reconciliation).
    pub fn set_neighbor_x_bar(&mut self, j: usize, x_bar: &[f64]) -> Result<()> {
        let k = self.slot_for(j)?;
        check_len(x_bar, self.slots[k].dim, "x̄ copy")?;
        self.slots[k].x_bar.copy_from_slice(x_bar);
        Ok(())
    }

    /// Starts an outer round: copies ŵ are re-initialized to zero.
    pub fn begin_outer(&mut self) {
        self.x_hat.iter_mut().for_each(|v| *v = 0.0);
        for s in &mut self.slots {
            s.w_mine.iter_mut().for_each(|v| *v = 0.0);
            s.w_recv.iter_mut().for_each(|v| *v = 0.0);
            s.x_hat.iter_mut().for_each(|v| *v = 0.0);
            s.lin = None;
            s.x_fresh = false;
            s.w_fresh = false;
        }
    }

    /// Computes `z[l] = ŷ[l] − Φ⁽ˡ⁾(p̂ + x̄)` and the range Jacobian blocks at
    /// `p̂ + x̄` for every incident edge. `neighbors` is in ascending id order
    /// and also refreshes this node's copies of the neighbors' x̄.
    pub fn linearize(&mut self, p_hat: &[f64], neighbors: &[NeighborPose<'_>]) -> Result<()> {
        check_len(p_hat, self.dim, "p̂")?;
        if neighbors.len() != self.slots.len() {
            return Err(Error::StaleData(format!(
                "robot {} expected {} neighbor poses, got {}",
                self.id,
                self.slots.len(),
                neighbors.len()
            )));
        }
        let pd = self.pos_dim;
        let own: Vec<f64> = (0..pd).map(|k| p_hat[k] + self.x_bar[k]).collect();
        for (slot, nb) in self.slots.iter_mut().zip(neighbors) {
            check_len(nb.p_hat, slot.dim, "neighbor p̂")?;
            check_len(nb.x_bar, slot.dim, "neighbor x̄")?;
            slot.x_bar.copy_from_slice(nb.x_bar);
            let other: Vec<f64> = (0..pd).map(|k| nb.p_hat[k] + nb.x_bar[k]).collect();
            let (range, dir) = range_and_direction(&own, &other);
            if !(range >= MIN_EDGE_LENGTH) {
                return Err(Error::DegenerateGeometry {
                    edge: slot.edge,
                    i: self.id.min(slot.id),
                    j: self.id.max(slot.id),
                    length: range,
                    min_length: MIN_EDGE_LENGTH,
                });
            }
            let mut r_self = vec![0.0; self.dim];
            let mut r_nbr = vec![0.0; slot.dim];
            for k in 0..pd {
                r_self[k] = dir[k];
                r_nbr[k] = -dir[k];
            }
            slot.lin = Some(LinearizedEdge {
                edge: slot.edge,
                z: nb.y_hat - range,
                r_self,
                r_nbr,
            });
        }
        Ok(())
    }

    /// First primal minimization: exact minimizer over x̂[i] of the local
    /// augmented Lagrangian with the current ŵ copies.
    pub fn x_update(&mut self, cfg: &SolverConfig) -> Result<&[f64]> {
        let n = self.dim;
        let rho = cfg.rho;
        let mut q = DMatrix::<f64>::identity(n, n) * (self.slots.len() as f64);
        let mut h = vec![0.0; n];
        for s in &self.slots {
            let lin = s.lin(self.id)?;
            let a = &lin.r_self;
            let b = lin.z - dot(&lin.r_nbr, &s.w_mine);
            let coef = rho * b - s.lambda;
            for r in 0..n {
                h[r] += a[r] * coef + rho * s.w_recv[r] - s.mu[r];
                if a[r] != 0.0 {
                    for c in 0..n {
                        q[(r, c)] += a[r] * a[c];
                    }
                }
            }
        }
        q *= rho;
        let qx = &q * DVector::from_column_slice(&self.x_bar);
        let g: Vec<f64> = h.iter().zip(qx.iter()).map(|(h, v)| h + v).collect();
        let sol = solve_norm_prox(&q, &g, cfg.prox_tol, cfg.max_prox_iter)?;
        for k in 0..n {
            self.x_hat[k] = sol.u[k] - self.x_bar[k];
        }
        Ok(&self.x_hat)
    }

    /// Messages after the x-update: `(j, x̂*[i], μᵢ⁽ʲ⁾)` for every neighbor.
    pub fn primal_x_messages(&self) -> impl Iterator<Item = (usize, Vec<f64>, Vec<f64>)> + '_ {
        self.slots
            .iter()
            .map(move |s| (s.id, self.x_hat.clone(), s.mu.clone()))
    }

    /// Stores `x̂*[j]` and `μⱼ⁽ⁱ⁾` received from neighbor `j`.
    pub fn receive_primal_x(&mut self, j: usize, x_hat: &[f64], mu: &[f64]) -> Result<()> {
        let k = self.slot_for(j)?;
        let s = &mut self.slots[k];
        check_len(x_hat, s.dim, "x̂ message")?;
        check_len(mu, s.dim, "μ message")?;
        s.x_hat.copy_from_slice(x_hat);
        s.mu_recv.copy_from_slice(mu);
        s.x_fresh = true;
        Ok(())
    }

    /// Second primal minimization over the copies ŵⱼ⁽ⁱ⁾, one SPD solve per
    /// neighbor: `(I + R[l,j]ᵀR[l,j]) ŵ = x̂*[j] + μⱼ⁽ⁱ⁾/ρ − R[l,j]ᵀ(R[l,i]x̂*[i] − z[l] + λᵢ⁽ˡ⁾/ρ)`.
    pub fn w_update(&mut self, cfg: &SolverConfig) -> Result<()> {
        let rho = cfg.rho;
        let id = self.id;
        for s in &mut self.slots {
            if !s.x_fresh {
                return Err(Error::StaleData(format!(
                    "robot {id} has no fresh x̂ from neighbor {} for the w-update",
                    s.id
                )));
            }
            let lin = s.lin(id)?;
            let m = s.dim;
            let r = DVector::from_column_slice(&lin.r_nbr);
            let a = DMatrix::<f64>::identity(m, m) + &r * r.transpose();
            let shift = dot(&lin.r_self, &self.x_hat) - lin.z + s.lambda / rho;
            let rhs = DVector::from_iterator(
                m,
                (0..m).map(|k| s.x_hat[k] + s.mu_recv[k] / rho - lin.r_nbr[k] * shift),
            );
            let chol = a.cholesky().ok_or_else(|| {
                Error::Invariant(format!("w-update matrix of robot {id} is not positive definite"))
            })?;
            let w = chol.solve(&rhs);
            s.w_mine.copy_from_slice(w.as_slice());
            s.x_fresh = false;
        }
        Ok(())
    }

    /// Messages after the w-update: `(j, ŵⱼ⁽ⁱ⁾*)`.
    pub fn primal_w_messages(&self) -> impl Iterator<Item = (usize, Vec<f64>)> + '_ {
        self.slots.iter().map(|s| (s.id, s.w_mine.clone()))
    }

    /// Stores `ŵᵢ⁽ʲ⁾*` received from neighbor `j`.
    pub fn receive_primal_w(&mut self, j: usize, w: &[f64]) -> Result<()> {
        let k = self.slot_for(j)?;
        let own = self.dim;
        let s = &mut self.slots[k];
        check_len(w, own, "ŵ message")?;
        s.w_recv.copy_from_slice(w);
        s.w_fresh = true;
        Ok(())
    }

    /// Dual ascent at the latest primal iterates. Returns the cold-start flag.
    pub fn dual_update(&mut self, cfg: &SolverConfig) -> Result<bool> {
        let rho = cfg.rho;
        let id = self.id;
        for s in &mut self.slots {
            if !s.w_fresh {
                return Err(Error::StaleData(format!(
                    "robot {id} has no fresh ŵ from neighbor {} for the dual update",
                    s.id
                )));
            }
            let lin = s.lin(id)?;
            let c = dot(&lin.r_self, &self.x_hat) + dot(&lin.r_nbr, &s.w_mine) - lin.z;
            s.lambda += rho * c;
            for (mu, (x, w)) in s.mu.iter_mut().zip(self.x_hat.iter().zip(&s.w_recv)) {
                *mu += rho * (x - w);
            }
            s.w_fresh = false;
            if s.lambda.abs() > cfg.dual_threshold || l2(&s.mu) > cfg.dual_threshold {
                self.cold_start_flag = true;
            }
        }
        Ok(self.cold_start_flag)
    }

    /// `x̄[j] ← x̄[j] + x̂*[j]` for the node and its neighbor copies, then the
    /// multiplier reset dictated by the start mode. Returns whether a reset happened.
    pub fn accumulate_and_reset(&mut self, cfg: &SolverConfig) -> bool {
        for (xb, xh) in self.x_bar.iter_mut().zip(self.x_hat.iter_mut()) {
            *xb += *xh;
            *xh = 0.0;
        }
        for s in &mut self.slots {
            for (xb, xh) in s.x_bar.iter_mut().zip(s.x_hat.iter_mut()) {
                *xb += *xh;
                *xh = 0.0;
            }
        }
        let reset = match cfg.start {
            StartMode::Warm => false,
            StartMode::Cold => self.cold_start_flag,
            StartMode::Reset => true,
        };
        if reset {
            self.reset_duals();
            self.resets += 1;
        }
        self.cold_start_flag = false;
        reset
    }

    pub fn reset_duals(&mut self) {
        for s in &mut self.slots {
            s.lambda = 0.0;
            s.mu.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Zeroes all accumulated state (x̄, copies and multipliers).
    pub fn clear(&mut self) {
        self.x_bar.iter_mut().for_each(|v| *v = 0.0);
        self.x_hat.iter_mut().for_each(|v| *v = 0.0);
        for s in &mut self.slots {
            *s = Slot::new(s.id, s.edge, s.dim, self.dim);
        }
        self.cold_start_flag = false;
    }

    /// Local augmented Lagrangian Lᵢ at the node's current iterates.
    pub fn local_lagrangian(&self, rho: f64) -> Result<f64> {
        let mut total = l2(&self.reconstruction());
        for s in &self.slots {
            let lin = s.lin(self.id)?;
            let c = dot(&lin.r_self, &self.x_hat) + dot(&lin.r_nbr, &s.w_mine) - lin.z;
            total += 0.5 * rho * c * c + s.lambda * c;
            for k in 0..self.dim {
                let d = self.x_hat[k] - s.w_recv[k];
                total += 0.5 * rho * d * d + s.mu[k] * d;
            }
        }
        Ok(total)
    }
}

fn check_len(v: &[f64], expected: usize, what: &str) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Shape(format!(
            "{what} has length {}, expected {expected}",
            v.len()
        )));
    }
    Ok(())
}
