//! Exact minimizer of `‖u‖₂ + ½ uᵀQu − gᵀu` for symmetric positive definite `Q`.
//!
//! The minimizer is zero iff `‖g‖₂ ≤ 1`. Otherwise it satisfies
//! `(Q + I/r) u = g` with `r = ‖u‖₂`; in the eigenbasis of `Q` this reduces to
//! the scalar secular equation `Σ g̃ₖ² / (1 + r λₖ)² = 1`, whose left side is
//! convex and strictly decreasing in `r`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::blockvec::l2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProxSolution {
    pub u: Vec<f64>,
    /// Root-finding iterations (0 when the zero test fires).
    pub iterations: usize,
}

/// Solves `min_u ‖u‖₂ + ½ uᵀQu − gᵀu`.
pub fn solve_norm_prox(q: &DMatrix<f64>, g: &[f64], tol: f64, max_iter: usize) -> Result<ProxSolution> {
    let n = g.len();
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::Shape(format!(
            "Q is {}x{}, g has length {n}",
            q.nrows(),
            q.ncols()
        )));
    }
    let g_norm = l2(g);
    if g_norm <= 1.0 {
        return Ok(ProxSolution {
            u: vec![0.0; n],
            iterations: 0,
        });
    }

    let eig = SymmetricEigen::new(q.clone());
    let lambda = &eig.eigenvalues;
    let l_min = lambda.min();
    let l_max = lambda.max();
    if !(l_min > 0.0) {
        return Err(Error::Invariant(format!(
            "x-update matrix is not positive definite (smallest eigenvalue {l_min:e})"
        )));
    }
    let gt = eig.eigenvectors.transpose() * DVector::from_column_slice(g);
    let gt2: Vec<f64> = gt.iter().map(|v| v * v).collect();

    // F(r) = Σ g̃² / (1 + rλ)² − 1 and its derivative.
    let eval = |r: f64| -> (f64, f64) {
        let mut f = -1.0;
        let mut df = 0.0;
        for (g2, l) in gt2.iter().zip(lambda.iter()) {
            let s = 1.0 + r * l;
            f += g2 / (s * s);
            df -= 2.0 * g2 * l / (s * s * s);
        }
        (f, df)
    };

    let mut lo = (g_norm - 1.0) / l_max;
    let mut hi = (g_norm - 1.0) / l_min;
    let mut r = lo;
    let mut iterations = 0;
    for it in 1..=max_iter.max(1) {
        iterations = it;
        let (f, df) = eval(r);
        if f.abs() <= tol {
            break;
        }
        if f > 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let newton = r - f / df;
        r = if df < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }

    let scaled = DVector::from_iterator(
        n,
        gt.iter()
            .zip(lambda.iter())
            .map(|(g, l)| r * g / (1.0 + r * l)),
    );
    let u = &eig.eigenvectors * scaled;
    Ok(ProxSolution {
        u: u.iter().copied().collect(),
        iterations,
    })
}

/// Subgradient optimality residual at `u`: `‖Qu − g + u/‖u‖‖` for `u ≠ 0`,
/// or `max(‖g‖ − 1, 0)` at `u = 0`.
pub fn optimality_residual(q: &DMatrix<f64>, g: &[f64], u: &[f64]) -> f64 {
    let nu = l2(u);
    if nu == 0.0 {
        return (l2(g) - 1.0).max(0.0);
    }
    let qu = q * DVector::from_column_slice(u);
    qu.iter()
        .zip(g)
        .zip(u)
        .map(|((qu, g), u)| {
            let r = qu - g + u / nu;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Objective value `‖u‖ + ½uᵀQu − gᵀu`.
pub fn prox_objective(q: &DMatrix<f64>, g: &[f64], u: &[f64]) -> f64 {
    let uv = DVector::from_column_slice(u);
    let quad = uv.dot(&(q * &uv));
    l2(u) + 0.5 * quad - g.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()
}
