//! Log-domain entropic transport with epsilon scaling.

use rayon::prelude::*;

use super::simplex::Plan;
use crate::error::{Error, Result};

const MAX_ITER_PER_STAGE: usize = 100_000;
const MARGINAL_TOL: f64 = 1e-10;
/// Marginal tolerance of the intermediate epsilon-scaling stages.
const STAGE_TOL: f64 = 1e-4;
const CHECK_EVERY: usize = 10;
const DROP_BELOW: f64 = 1e-16;
/// Cost matrices up to this many entries are cached.
const CACHE_LIMIT: usize = 1 << 22;

fn logsumexp(n: usize, x: impl Fn(usize) -> f64) -> f64 {
    let m = (0..n).map(&x).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (0..n).map(|k| (x(k) - m).exp()).sum::<f64>().ln()
}

/// Entropic plan between `a` and `b` at regularization `reg`. Costs are
/// cached when small enough, evaluated on demand otherwise.
pub(crate) fn solve<C>(a: &[f64], b: &[f64], cost: C, reg: f64) -> Result<Plan>
where
    C: Fn(usize, usize) -> f64 + Sync,
{
    let (m, n) = (a.len(), b.len());
    if m == 0 || n == 0 {
        return Err(Error::Transport("empty support".into()));
    }
    if !(reg > 0.0) {
        return Err(Error::InvalidParameter(format!("regularization must be > 0, got {reg}")));
    }
    let cache: Option<Vec<f64>> =
        (m * n <= CACHE_LIMIT).then(|| (0..m * n).into_par_iter().map(|k| cost(k / n, k % n)).collect());
    let c = |i: usize, j: usize| match &cache {
        Some(v) => v[i * n + j],
        None => cost(i, j),
    };
    let la: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let cmax = (0..m).into_par_iter().map(|i| (0..n).map(|j| c(i, j)).fold(0.0f64, f64::max)).reduce(|| 0.0, f64::max);

    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut eps = cmax.max(reg);
    loop {
        let last = eps <= reg;
        let tol = if last { MARGINAL_TOL } else { STAGE_TOL };
        let mut converged = false;
        for it in 0..MAX_ITER_PER_STAGE {
            f = (0..m).into_par_iter().map(|i| eps * la[i] - eps * logsumexp(n, |j| (g[j] - c(i, j)) / eps)).collect();
            g = (0..n).into_par_iter().map(|j| eps * lb[j] - eps * logsumexp(m, |i| (f[i] - c(i, j)) / eps)).collect();
            if it % CHECK_EVERY != 0 {
                continue;
            }
            // columns are exact after the g update; measure the row error
            let err: f64 = (0..m)
                .into_par_iter()
                .map(|i| {
                    let row: f64 = (0..n).map(|j| ((f[i] + g[j] - c(i, j)) / eps).exp()).sum();
                    (row - a[i]).abs()
                })
                .sum();
            if err < tol {
                converged = true;
                break;
            }
        }
        if last {
            if !converged {
                return Err(Error::Transport(format!(
                    "entropic solver did not reach marginal tolerance at reg {reg:e}"
                )));
            }
            break;
        }
        eps = (eps * 0.5).max(reg);
    }

    let rows: Vec<Vec<(usize, usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter_map(|j| {
                    let p = ((f[i] + g[j] - c(i, j)) / eps).exp();
                    (p > DROP_BELOW).then_some((i, j, p))
                })
                .collect()
        })
        .collect();
    let entries: Vec<(usize, usize, f64)> = rows.into_iter().flatten().collect();
    let total = entries.iter().map(|&(i, j, p)| p * c(i, j)).sum();
    Ok(Plan { cost: total, entries })
}
