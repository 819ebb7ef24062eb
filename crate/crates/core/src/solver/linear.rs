//! Weighted graph Laplacian systems on the grid, solved by Jacobi-preconditioned
//! conjugate gradients.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// `A x = d .* x + coef * L_w x`, where `L_w` sums `w_k (x_k - x_j) / h^2`
/// over the forward edges `k -> j` of each cell, with the edge weight taken
/// from the lower-index cell.
pub(crate) struct WeightedOperator<'a> {
    pub grid: Grid,
    pub diag: &'a [f64],
    pub edge: &'a [f64],
    pub coef: f64,
}

impl WeightedOperator<'_> {
    fn for_each_edge(&self, mut f: impl FnMut(usize, usize, f64)) {
        let g = self.grid;
        let (ix, iy) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                if i + 1 < g.nx {
                    f(k, k + 1, ix);
                }
                if j + 1 < g.ny {
                    f(k, k + g.nx, iy);
                }
            }
        }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yk, d), xk) in y.iter_mut().zip(self.diag).zip(x) {
            *yk = d * xk;
        }
        if self.coef == 0.0 {
            return;
        }
        self.for_each_edge(|k, j, s| {
            let t = self.coef * self.edge[k] * s * (x[k] - x[j]);
            y[k] += t;
            y[j] -= t;
        });
    }

    fn jacobi(&self) -> Vec<f64> {
        let mut d = self.diag.to_vec();
        if self.coef != 0.0 {
            self.for_each_edge(|k, j, s| {
                let t = self.coef * self.edge[k] * s;
                d[k] += t;
                d[j] += t;
            });
        }
        d
    }
}

/// Solves `A x = b` starting from `x`. Returns the iteration count.
pub(crate) fn conjugate_gradient(
    op: &WeightedOperator<'_>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = b.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let pre = op.jacobi();
    let mut ax = vec![0.0; n];
    op.apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&pre).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut q = vec![0.0; n];
    let mut rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    for it in 0..max_iter {
        if rnorm <= tol * bnorm {
            return Ok(it);
        }
        op.apply(&p, &mut q);
        let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        if !(pq > 0.0) {
            return Err(Error::CgDivergence { iterations: it, residual: rnorm / bnorm });
        }
        let alpha = rz / pq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
            z[k] = r[k] / pre[k];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    if rnorm <= tol * bnorm {
        Ok(max_iter)
    } else {
        Err(Error::CgDivergence { iterations: max_iter, residual: rnorm / bnorm })
    }
}
