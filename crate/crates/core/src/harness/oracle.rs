//! Single-process reference for the SCP/ADMM iterations.
//!
//! All iterates live in flat arrays indexed by robot and neighbor slot; no
//! messages are exchanged. The w-update uses the Sherman–Morrison inverse of
//! `I + r rᵀ` instead of a factorization.

use nalgebra::DMatrix;

use crate::blockvec::{dot, l2, BlockLayout, BlockVec};
use crate::error::{Error, Result};
use crate::measurement::{range_and_direction, MIN_EDGE_LENGTH};
use crate::solver::prox::solve_norm_prox;
use crate::solver::{SolverConfig, StartMode};
use crate::topology::SwarmGraph;

#[derive(Debug, Clone)]
struct Half {
    /// Neighbor id.
    j: usize,
    /// Slot of `i` in `j`'s neighbor list.
    back: usize,
    z: f64,
    r_self: Vec<f64>,
    r_nbr: Vec<f64>,
    /// ŵⱼ⁽ⁱ⁾.
    w: Vec<f64>,
    lambda: f64,
    /// μᵢ⁽ʲ⁾.
    mu: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CentralizedOracle {
    layout: BlockLayout,
    pos_dim: usize,
    x_bar: Vec<Vec<f64>>,
    x_hat: Vec<Vec<f64>>,
    halves: Vec<Vec<Half>>,
}

impl CentralizedOracle {
    pub fn new(graph: &SwarmGraph, layout: BlockLayout, pos_dim: usize) -> Result<Self> {
        let n = graph.num_vertices();
        if layout.num_blocks() != n {
            return Err(Error::Shape("layout does not match the graph".into()));
        }
        let nbrs: Vec<Vec<usize>> = (0..n).map(|i| graph.neighbors(i)).collect::<Result<_>>()?;
        let halves = (0..n)
            .map(|i| {
                nbrs[i]
                    .iter()
                    .map(|&j| Half {
                        j,
                        back: nbrs[j].iter().position(|&k| k == i).expect("undirected graph"),
                        z: 0.0,
                        r_self: vec![0.0; layout.block_dim(i)],
                        r_nbr: vec![0.0; layout.block_dim(j)],
                        w: vec![0.0; layout.block_dim(j)],
                        lambda: 0.0,
                        mu: vec![0.0; layout.block_dim(i)],
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            x_bar: (0..n).map(|i| vec![0.0; layout.block_dim(i)]).collect(),
            x_hat: (0..n).map(|i| vec![0.0; layout.block_dim(i)]).collect(),
            layout,
            pos_dim,
            halves,
        })
    }

    pub fn x_bar(&self) -> BlockVec {
        BlockVec::from_flat(self.layout.clone(), self.x_bar.concat()).expect("layout matches")
    }

    pub fn outer_round(&mut self, p_hat: &BlockVec, y_hat: &BlockVec, graph: &SwarmGraph, cfg: &SolverConfig) -> Result<BlockVec> {
        let n = self.x_bar.len();
        let pd = self.pos_dim;
        let pos = |i: usize| -> Vec<f64> { (0..pd).map(|k| p_hat.block(i)[k] + self.x_bar[i][k]).collect() };
        let positions: Vec<Vec<f64>> = (0..n).map(pos).collect();
        for i in 0..n {
            self.x_hat[i].iter_mut().for_each(|v| *v = 0.0);
            for h in &mut self.halves[i] {
                let (range, dir) = range_and_direction(&positions[i], &positions[h.j]);
                if !(range >= MIN_EDGE_LENGTH) {
                    let edge = graph.edge_between(i, h.j).unwrap_or(usize::MAX);
                    return Err(Error::DegenerateGeometry {
                        edge,
                        i: i.min(h.j),
                        j: i.max(h.j),
                        length: range,
                        min_length: MIN_EDGE_LENGTH,
                    });
                }
                let l = graph
                    .edge_between(i, h.j)
                    .ok_or_else(|| Error::Invariant(format!("no edge between {i} and {}", h.j)))?;
                h.z = y_hat.as_slice()[l] - range;
                h.r_self.iter_mut().for_each(|v| *v = 0.0);
                h.r_nbr.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..pd {
                    h.r_self[k] = dir[k];
                    h.r_nbr[k] = -dir[k];
                }
                h.w.iter_mut().for_each(|v| *v = 0.0);
            }
        }

        let rho = cfg.rho;
        let mut flags = vec![false; n];
        for _ in 0..cfg.n_admm {
            // x-updates read ŵᵢ⁽ʲ⁾ from the previous sweep.
            let mut x_new = Vec::with_capacity(n);
            for i in 0..n {
                let dim = self.x_bar[i].len();
                let hs = &self.halves[i];
                let mut q = DMatrix::<f64>::identity(dim, dim) * hs.len() as f64;
                let mut g = vec![0.0; dim];
                for h in hs {
                    let w_recv = &self.halves[h.j][h.back].w;
                    let coef = rho * (h.z - dot(&h.r_nbr, &h.w)) - h.lambda;
                    for r in 0..dim {
                        g[r] += h.r_self[r] * coef + rho * w_recv[r] - h.mu[r];
                        for c in 0..dim {
                            q[(r, c)] += h.r_self[r] * h.r_self[c];
                        }
                    }
                }
                q *= rho;
                for r in 0..dim {
                    for c in 0..dim {
                        g[r] += q[(r, c)] * self.x_bar[i][c];
                    }
                }
                let u = solve_norm_prox(&q, &g, cfg.prox_tol, cfg.max_prox_iter)?.u;
                x_new.push(u.iter().zip(&self.x_bar[i]).map(|(u, b)| u - b).collect::<Vec<f64>>());
            }
            self.x_hat = x_new;

            // w-updates: (I + r rᵀ)⁻¹ v = v − r (rᵀv) / (1 + rᵀr).
            for i in 0..n {
                for s in 0..self.halves[i].len() {
                    let (j, back) = (self.halves[i][s].j, self.halves[i][s].back);
                    let mu_j = self.halves[j][back].mu.clone();
                    let h = &mut self.halves[i][s];
                    let shift = dot(&h.r_self, &self.x_hat[i]) - h.z + h.lambda / rho;
                    let v: Vec<f64> = (0..h.w.len())
                        .map(|k| self.x_hat[j][k] + mu_j[k] / rho - h.r_nbr[k] * shift)
                        .collect();
                    let rr = dot(&h.r_nbr, &h.r_nbr);
                    let rv = dot(&h.r_nbr, &v);
                    for k in 0..v.len() {
                        h.w[k] = v[k] - h.r_nbr[k] * rv / (1.0 + rr);
                    }
                }
            }

            // Dual ascent.
            for i in 0..n {
                for s in 0..self.halves[i].len() {
                    let (j, back) = (self.halves[i][s].j, self.halves[i][s].back);
                    let w_recv = self.halves[j][back].w.clone();
                    let h = &mut self.halves[i][s];
                    let c = dot(&h.r_self, &self.x_hat[i]) + dot(&h.r_nbr, &h.w) - h.z;
                    h.lambda += rho * c;
                    for k in 0..h.mu.len() {
                        h.mu[k] += rho * (self.x_hat[i][k] - w_recv[k]);
                    }
                    if h.lambda.abs() > cfg.dual_threshold || l2(&h.mu) > cfg.dual_threshold {
                        flags[i] = true;
                    }
                }
            }
        }

        for i in 0..n {
            for k in 0..self.x_bar[i].len() {
                self.x_bar[i][k] += self.x_hat[i][k];
                self.x_hat[i][k] = 0.0;
            }
            let reset = match cfg.start {
                StartMode::Warm => false,
                StartMode::Cold => flags[i],
                StartMode::Reset => true,
            };
            if reset {
                for h in &mut self.halves[i] {
                    h.lambda = 0.0;
                    h.mu.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        Ok(self.x_bar())
    }
}

/// Runs `rounds` outer rounds on a fixed `(p̂, ŷ)` and returns x̄.
pub fn centralized_oracle(
    p_hat: &BlockVec,
    y_hat: &BlockVec,
    graph: &SwarmGraph,
    pos_dim: usize,
    cfg: &SolverConfig,
    rounds: usize,
) -> Result<BlockVec> {
    let mut o = CentralizedOracle::new(graph, p_hat.layout().clone(), pos_dim)?;
    for _ in 0..rounds {
        o.outer_round(p_hat, y_hat, graph, cfg)?;
    }
    Ok(o.x_bar())
}
