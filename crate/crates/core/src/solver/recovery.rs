//! Recovery states for a sharp interface: optimal 1D profile across the
//! boundary and mollified field approximants.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::SegmentationState;
use crate::energy::measures_from;
use crate::error::{Error, Result};
use crate::grid::{distance_to_boundary, Grid, IndicatorField, MultiField, ScalarField};
use crate::potential::DoubleWell;

/// Standard bump `C exp(1 / (|x|^2 - 1))` rescaled to radius `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    a: f64,
    norm: f64,
    dim: usize,
}

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (1.0 / (r2 - 1.0)).exp()
    } else {
        0.0
    }
}

impl Mollifier {
    pub fn new(a: f64, dim: usize) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("mollifier scale must be > 0, got {a}")));
        }
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!("mollifier dimension must be 1 or 2, got {dim}")));
        }
        // Simpson on [0, 1] of the radial profile times the sphere area
        let panels = 20_000;
        let h = 1.0 / panels as f64;
        let radial = |r: f64| if dim == 1 { 2.0 * bump(r * r) } else { 2.0 * std::f64::consts::PI * r * bump(r * r) };
        let mut s = radial(0.0) + radial(1.0);
        for k in 1..panels {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * radial(k as f64 * h);
        }
        let integral = s * h / 3.0;
        Ok(Mollifier { a, norm: 1.0 / integral, dim })
    }

    pub fn scale(&self) -> f64 {
        self.a
    }

    /// Normalization constant of the unit-radius bump.
    pub fn constant(&self) -> f64 {
        self.norm
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let r2 = (x[0] * x[0] + x[1] * x[1]) / (self.a * self.a);
        self.norm * bump(r2) / self.a.powi(self.dim as i32)
    }

    fn raw_stencil(&self, grid: &Grid) -> Vec<(isize, isize, f64)> {
        let rx = (self.a / grid.hx).ceil() as isize;
        let ry = if grid.is_1d() { 0 } else { (self.a / grid.hy).ceil() as isize };
        let area = grid.cell_area();
        let mut out = Vec::new();
        for dj in -ry..=ry {
            for di in -rx..=rx {
                let x = [di as f64 * grid.hx, dj as f64 * grid.hy];
                let w = self.eval(x) * area;
                if w > 0.0 {
                    out.push((di, dj, w));
                }
            }
        }
        if out.is_empty() {
            out.push((0, 0, 1.0));
        }
        out
    }

    /// Riemann sum of the kernel over the grid offsets.
    pub fn discrete_mass(&self, grid: &Grid) -> f64 {
        self.raw_stencil(grid).iter().map(|s| s.2).sum()
    }

    /// Grid offsets and weights, normalized to sum to one.
    pub fn stencil(&self, grid: &Grid) -> Vec<(isize, isize, f64)> {
        let mut s = self.raw_stencil(grid);
        let total: f64 = s.iter().map(|x| x.2).sum();
        s.iter_mut().for_each(|x| x.2 /= total);
        s
    }

    /// `psi_a * c`, renormalized by the kernel mass that falls inside the
    /// domain.
    pub fn convolve(&self, c: &MultiField) -> MultiField {
        let g = *c.grid();
        let m = c.channels();
        let stencil = self.stencil(&g);
        let mut out = vec![0.0; g.len() * m];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                let mut mass = 0.0;
                let acc = &mut out[k * m..(k + 1) * m];
                for &(di, dj, w) in &stencil {
                    let (si, sj) = (i as isize + di, j as isize + dj);
                    if si < 0 || sj < 0 || si as usize >= g.nx || sj as usize >= g.ny {
                        continue;
                    }
                    mass += w;
                    for (a, x) in acc.iter_mut().zip(c.cell(g.index(si as usize, sj as usize))) {
                        *a += w * x;
                    }
                }
                acc.iter_mut().for_each(|a| *a /= mass);
            }
        }
        MultiField::new(g, m, out).expect("convolution of finite data is finite")
    }
}

/// Heteroclinic profile `q' = sqrt(W(q))`, `q(0) = 1/2`.
pub struct InterfaceProfile {
    table: Option<(f64, Vec<f64>)>,
}

const PROFILE_SPAN: f64 = 40.0;
const PROFILE_STEP: f64 = 1e-3;

impl InterfaceProfile {
    pub fn new(w: &DoubleWell) -> Self {
        if w.name() == "quartic" {
            return InterfaceProfile { table: None };
        }
        let steps = (PROFILE_SPAN / PROFILE_STEP).round() as usize;
        let rhs = |q: f64| w.eval(q.clamp(0.0, 1.0)).max(0.0).sqrt();
        let integrate = |dir: f64| {
            let mut q = 0.5;
            let mut out = Vec::with_capacity(steps + 1);
            out.push(q);
            let h = dir * PROFILE_STEP;
            for _ in 0..steps {
                let k1 = rhs(q);
                let k2 = rhs(q + 0.5 * h * k1);
                let k3 = rhs(q + 0.5 * h * k2);
                let k4 = rhs(q + h * k3);
                q = (q + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).clamp(0.0, 1.0);
                out.push(q);
            }
            out
        };
        let forward = integrate(1.0);
        let backward = integrate(-1.0);
        let mut table: Vec<f64> = backward.into_iter().rev().collect();
        table.extend_from_slice(&forward[1..]);
        InterfaceProfile { table: Some((-PROFILE_SPAN, table)) }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match &self.table {
            None => 1.0 / (1.0 + (-s).exp()),
            Some((start, t)) => {
                let x = (s - start) / PROFILE_STEP;
                if x <= 0.0 {
                    return t[0];
                }
                let last = t.len() - 1;
                if x >= last as f64 {
                    return t[last];
                }
                let i = x.floor() as usize;
                let f = x - i as f64;
                t[i] * (1.0 - f) + t[i + 1] * f
            }
        }
    }
}

#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    cell: usize,
    seed: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other.d2.total_cmp(&self.d2).then_with(|| other.cell.cmp(&self.cell))
    }
}

/// For every cell, a cell of `mask` with (approximately) nearest center,
/// found by seed propagation over the 8-neighbourhood.
pub(crate) fn nearest_in(grid: &Grid, mask: &[bool]) -> Vec<usize> {
    let mut best = vec![f64::INFINITY; grid.len()];
    let mut seed = vec![usize::MAX; grid.len()];
    let mut heap = BinaryHeap::new();
    for k in (0..grid.len()).filter(|&k| mask[k]) {
        best[k] = 0.0;
        seed[k] = k;
        heap.push(Candidate { d2: 0.0, cell: k, seed: k });
    }
    while let Some(Candidate { d2, cell, seed: s }) = heap.pop() {
        if d2 > best[cell] || seed[cell] != s {
            continue;
        }
        let (i, j) = grid.coords(cell);
        let sc = grid.center(s);
        for dj in -1isize..=1 {
            for di in -1isize..=1 {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if (di, dj) == (0, 0) || ni < 0 || nj < 0 || ni as usize >= grid.nx || nj as usize >= grid.ny {
                    continue;
                }
                let nk = grid.index(ni as usize, nj as usize);
                let c = grid.center(nk);
                let nd = (c[0] - sc[0]).powi(2) + (c[1] - sc[1]).powi(2);
                if nd < best[nk] || (nd == best[nk] && s < seed[nk]) {
                    best[nk] = nd;
                    seed[nk] = s;
                    heap.push(Candidate { d2: nd, cell: nk, seed: s });
                }
            }
        }
    }
    seed
}

fn extend_from(c: &MultiField, mask: &[bool]) -> MultiField {
    let g = *c.grid();
    let m = c.channels();
    let near = nearest_in(&g, mask);
    let values = near.iter().flat_map(|&s| c.cell(s).to_vec()).collect();
    MultiField::new(g, m, values).expect("extension of finite data is finite")
}

/// Recovery state for `(chi_E, c1, c2)` at interface width `eps`: the
/// profile `q(sd / eps)` of the signed distance, and each field extended
/// off its phase by nearest-point values, then mollified at scale
/// `a = (lambda(Omega \ E_b))^(1/(2p))` with erosion depth `b = 4 eps`.
pub fn recovery_sequence(
    e: &IndicatorField,
    c1: &MultiField,
    c2: &MultiField,
    eps: f64,
    w: &DoubleWell,
    p: f64,
) -> Result<SegmentationState> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must lie in (1, inf), got {p}")));
    }
    let g = *e.grid();
    g.check_same(c1.grid())?;
    g.check_same(c2.grid())?;
    let dist = distance_to_boundary(e)?;
    let profile = InterfaceProfile::new(w);
    let mask = e.mask();
    let v: Vec<f64> = (0..g.len())
        .map(|k| {
            let sd = if mask[k] { dist[k] } else { -dist[k] };
            profile.eval(sd / eps)
        })
        .collect();
    let v = ScalarField::new(g, v)?;
    let b = 4.0 * eps;
    let lam = measures_from(&v);
    let outside1: f64 = (0..g.len()).filter(|&k| !(mask[k] && dist[k] > b)).map(|k| lam.lam_v.weights()[k]).sum();
    let outside2: f64 = (0..g.len()).filter(|&k| !(!mask[k] && dist[k] > b)).map(|k| lam.lam_1mv.weights()[k]).sum();
    let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
    let dim = g.dim();
    let smooth = |c: &MultiField, inside: &[bool], mass: f64| -> Result<MultiField> {
        let ext = extend_from(c, inside);
        let a = mass.powf(1.0 / (2.0 * p));
        if a > 0.0 {
            Ok(Mollifier::new(a, dim)?.convolve(&ext))
        } else {
            Ok(ext)
        }
    };
    let c1 = smooth(c1, mask, outside1)?;
    let c2 = smooth(c2, &complement, outside2)?;
    SegmentationState::new(v, c1, c2)
}

/// Mollifier scales `(a1, a2)` used by [`recovery_sequence`].
pub fn recovery_scales(e: &IndicatorField, eps: f64, w: &DoubleWell, p: f64) -> Result<(f64, f64)> {
    let g = *e.grid();
    let zero = MultiField::constant(g, &[0.0]);
    let dist = distance_to_boundary(e)?;
    let s = recovery_sequence(e, &zero, &zero, eps, w, p)?;
    let lam = measures_from(&s.v);
    let b = 4.0 * eps;
    let mask = e.mask();
    let o1: f64 = (0..g.len()).filter(|&k| !(mask[k] && dist[k] > b)).map(|k| lam.lam_v.weights()[k]).sum();
    let o2: f64 = (0..g.len()).filter(|&k| !(!mask[k] && dist[k] > b)).map(|k| lam.lam_1mv.weights()[k]).sum();
    Ok((o1.powf(1.0 / (2.0 * p)), o2.powf(1.0 / (2.0 * p))))
}
