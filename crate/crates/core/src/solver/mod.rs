//! Alternating minimization of the phase-field energy.
//!
//! Each outer iteration refits the fields `c1, c2` for the current phase
//! field and then takes one semi-implicit gradient-flow step in `v`:
//! diffusion implicit, well derivative and data forcing explicit, followed
//! by clamping to `[0, 1]`. Steps that raise the energy are rejected, so the
//! recorded trace is nonincreasing.
//!
//! The scheme works on the plain (unnormalized) energy; normalized energies
//! are for reporting.

mod linear;
mod recovery;

pub use recovery::{recovery_scales, recovery_sequence, InterfaceProfile, Mollifier};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use self::linear::{conjugate_gradient, WeightedOperator};
use crate::energy::{at_energy, weighted_gradient, weighted_misfit, EnergyBreakdown, EnergyParams, Mu};
use crate::error::{Error, Result};
use crate::grid::{gradient_norm_sq, MultiField, ScalarField};
use crate::potential::DoubleWell;

/// Smallest step size before the flow gives up.
pub const MIN_TAU: f64 = 1e-12;
/// Tolerance of the constant fit for `p != 2`.
pub const FIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationState {
    pub v: ScalarField,
    pub c1: MultiField,
    pub c2: MultiField,
}

impl SegmentationState {
    pub fn new(v: ScalarField, c1: MultiField, c2: MultiField) -> Result<Self> {
        v.grid().check_same(c1.grid())?;
        v.grid().check_same(c2.grid())?;
        if c1.channels() != c2.channels() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} channels", c1.channels()),
                found: format!("{} channels", c2.channels()),
            });
        }
        Ok(SegmentationState { v, c1, c2 })
    }

    /// The relabeled state `(1 - v, c2, c1)`.
    pub fn swapped(&self) -> Self {
        SegmentationState { v: self.v.complement(), c1: self.c2.clone(), c2: self.c1.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Smooth,
    PiecewiseConstant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_outer: usize,
    /// Relative energy decrease per outer iteration below which we stop.
    pub tol: f64,
    /// Initial (and maximal) step size of the v flow.
    pub tau: f64,
    /// Floor of the field weights `max(|v|, eta)`.
    pub eta: f64,
    pub cg_tol: f64,
    pub cg_max: usize,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer: 2000,
            tol: 1e-9,
            tau: 1e-2,
            eta: 1e-6,
            cg_tol: 1e-10,
            cg_max: 20_000,
            mode: Mode::Smooth,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.eta > 0.0 && self.eta <= 1e-3) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0, 1e-3], got {}", self.eta)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.cg_tol > 0.0) || self.cg_max == 0 {
            return Err(Error::InvalidParameter("cg_tol must be > 0 and cg_max >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantFit {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    /// Set for a phase with zero mass; its constant is the fallback.
    pub degenerate: [bool; 2],
}

fn misfit(c: &[f64], u: &[f64], p: f64) -> f64 {
    let sq: f64 = c.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
    sq.powf(0.5 * p)
}

/// Zero of a nondecreasing function on `[lo, hi]` by bisection.
fn bisect_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimizer of `sum_k w_k |c - u_k|^p` over constant vectors `c`.
fn fit_one(u0: &MultiField, weights: &[f64], p: f64) -> Vec<f64> {
    let m = u0.channels();
    let mass: f64 = weights.iter().sum();
    let mut mean = vec![0.0; m];
    for (k, w) in weights.iter().enumerate().filter(|(_, w)| **w > 0.0) {
        for (acc, u) in mean.iter_mut().zip(u0.cell(k)) {
            *acc += w * u;
        }
    }
    mean.iter_mut().for_each(|x| *x /= mass);
    if p == 2.0 {
        return mean;
    }
    let support: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] > 0.0).collect();
    let mut c = mean;
    // cyclic coordinate search on the convex misfit; the vector norm couples
    // channels. Bisection on the partial derivative resolves the minimizer
    // below the sqrt(machine eps) floor of value comparisons.
    for _ in 0..200 {
        let before = c.clone();
        for ch in 0..m {
            let (lo, hi) = support.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
                let u = u0.cell(k)[ch];
                (lo.min(u), hi.max(u))
            });
            let slope = |t: f64| {
                let mut trial = c.clone();
                trial[ch] = t;
                support
                    .iter()
                    .map(|&k| {
                        let u = u0.cell(k);
                        let n2: f64 = trial.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
                        if n2 == 0.0 {
                            0.0
                        } else {
                            weights[k] * n2.powf(0.5 * p - 1.0) * (t - u[ch])
                        }
                    })
                    .sum::<f64>()
            };
            c[ch] = bisect_increasing(slope, lo, hi, FIT_TOL);
        }
        let change = c.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if m == 1 || change <= FIT_TOL {
            break;
        }
    }
    c
}

/// Best constants for the current phase field (weights `|v|` and `|1 - v|`).
/// A phase without mass keeps its entry of `fallback` and is flagged.
pub fn fit_constants(v: &ScalarField, u0: &MultiField, p: f64, fallback: [&[f64]; 2]) -> Result<ConstantFit> {
    v.grid().check_same(u0.grid())?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must lie in (1, inf), got {p}")));
    }
    for f in fallback {
        if f.len() != u0.channels() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} channels", u0.channels()),
                found: format!("{} channels", f.len()),
            });
        }
    }
    let w1: Vec<f64> = v.values().iter().map(|x| x.abs()).collect();
    let w2: Vec<f64> = v.values().iter().map(|x| (1.0 - x).abs()).collect();
    let mut fit = ConstantFit { c1: fallback[0].to_vec(), c2: fallback[1].to_vec(), degenerate: [false; 2] };
    if w1.iter().sum::<f64>() > 0.0 {
        fit.c1 = fit_one(u0, &w1, p);
    } else {
        fit.degenerate[0] = true;
    }
    if w2.iter().sum::<f64>() > 0.0 {
        fit.c2 = fit_one(u0, &w2, p);
    } else {
        fit.degenerate[1] = true;
    }
    Ok(fit)
}

fn floored(weights: impl Iterator<Item = f64>, eta: f64) -> Vec<f64> {
    weights.map(|w| w.max(eta)).collect()
}

/// `p = 2`: per channel, `w (c - u0) - mu div(w grad c) = 0` by CG.
fn smooth_fit_quadratic(
    u0: &MultiField,
    w: &[f64],
    mu: f64,
    init: &MultiField,
    cfg: &SolverConfig,
) -> Result<MultiField> {
    let g = *u0.grid();
    let m = u0.channels();
    let op = WeightedOperator { grid: g, diag: w, edge: w, coef: mu };
    let mut out = init.values().to_vec();
    for ch in 0..m {
        let b: Vec<f64> = (0..g.len()).map(|k| w[k] * u0.cell(k)[ch]).collect();
        let mut x: Vec<f64> = (0..g.len()).map(|k| init.cell(k)[ch]).collect();
        conjugate_gradient(&op, &b, &mut x, cfg.cg_tol, cfg.cg_max)?;
        for (k, xk) in x.into_iter().enumerate() {
            out[k * m + ch] = xk;
        }
    }
    MultiField::new(g, m, out)
}

fn smooth_objective(c: &MultiField, u0: &MultiField, w: &[f64], mu: f64, p: f64) -> f64 {
    weighted_misfit(c, u0, w, p) + mu * weighted_gradient(c, w, p)
}

fn smooth_gradient(c: &MultiField, u0: &MultiField, w: &[f64], mu: f64, p: f64) -> Vec<f64> {
    let g = *c.grid();
    let m = c.channels();
    let vals = c.values();
    let mut grad = vec![0.0; vals.len()];
    for k in 0..g.len() {
        let r: Vec<f64> = c.cell(k).iter().zip(u0.cell(k)).map(|(a, b)| a - b).collect();
        let n2: f64 = r.iter().map(|x| x * x).sum();
        if n2 > 0.0 {
            let s = w[k] * p * n2.powf(0.5 * p - 1.0);
            for ch in 0..m {
                grad[k * m + ch] += s * r[ch];
            }
        }
    }
    let g2 = gradient_norm_sq(c, None);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.index(i, j);
            if g2[k] == 0.0 {
                continue;
            }
            let s = mu * w[k] * p * g2[k].powf(0.5 * p - 1.0);
            let mut edge = |nb: usize, h: f64| {
                for ch in 0..m {
                    let d = (vals[nb * m + ch] - vals[k * m + ch]) / (h * h);
                    grad[nb * m + ch] += s * d;
                    grad[k * m + ch] -= s * d;
                }
            };
            if i + 1 < g.nx {
                edge(k + 1, g.hx);
            }
            if j + 1 < g.ny {
                edge(k + g.nx, g.hy);
            }
        }
    }
    grad
}

/// General `p`: projected gradient descent with backtracking on the
/// floored-weight field energy, projected onto the range of `u0`.
fn smooth_fit_descent(
    u0: &MultiField,
    w: &[f64],
    mu: f64,
    p: f64,
    init: &MultiField,
    cfg: &SolverConfig,
) -> Result<MultiField> {
    let g = *u0.grid();
    let m = u0.channels();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for k in 0..g.len() {
        for ch in 0..m {
            lo[ch] = lo[ch].min(u0.cell(k)[ch]);
            hi[ch] = hi[ch].max(u0.cell(k)[ch]);
        }
    }
    let mut c = init.clone();
    let mut f = smooth_objective(&c, u0, w, mu, p);
    let mut step = 1.0;
    for _ in 0..cfg.cg_max.min(2000) {
        let grad = smooth_gradient(&c, u0, w, mu, p);
        let gn: f64 = grad.iter().map(|x| x * x).sum();
        if gn == 0.0 {
            break;
        }
        let mut accepted = false;
        while step > 1e-16 {
            let trial: Vec<f64> = c
                .values()
                .iter()
                .zip(&grad)
                .enumerate()
                .map(|(i, (x, d))| (x - step * d).clamp(lo[i % m], hi[i % m]))
                .collect();
            let trial = MultiField::new(g, m, trial)?;
            let ft = smooth_objective(&trial, u0, w, mu, p);
            if ft < f {
                let decrease = f - ft;
                c = trial;
                f = ft;
                step *= 2.0;
                accepted = true;
                if decrease <= 1e-14 * f.max(1e-300) {
                    return Ok(c);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(c)
}

/// Fields minimizing the floored-weight energy for fixed `v`, warm-started
/// from `init`.
pub fn fit_smooth_fields(
    v: &ScalarField,
    u0: &MultiField,
    params: &EnergyParams,
    cfg: &SolverConfig,
    init: (&MultiField, &MultiField),
) -> Result<(MultiField, MultiField)> {
    params.validate()?;
    cfg.validate()?;
    v.grid().check_same(u0.grid())?;
    let mu = match params.mu {
        Mu::Finite(m) => m,
        Mu::Infinite => return Err(Error::InvalidParameter("smooth fields need a finite mu".into())),
    };
    let area = v.grid().cell_area();
    let w1 = floored(v.values().iter().map(|x| x.abs() * area), cfg.eta * area);
    let w2 = floored(v.values().iter().map(|x| (1.0 - x).abs() * area), cfg.eta * area);
    if params.p == 2.0 {
        Ok((smooth_fit_quadratic(u0, &w1, mu, init.0, cfg)?, smooth_fit_quadratic(u0, &w2, mu, init.1, cfg)?))
    } else {
        Ok((
            smooth_fit_descent(u0, &w1, mu, params.p, init.0, cfg)?,
            smooth_fit_descent(u0, &w2, mu, params.p, init.1, cfg)?,
        ))
    }
}

fn forcing(c: &MultiField, u0: &MultiField, mu: f64, p: f64) -> Vec<f64> {
    let g2 = if mu > 0.0 { Some(gradient_norm_sq(c, None)) } else { None };
    (0..u0.grid().len())
        .map(|k| {
            let data = misfit(c.cell(k), u0.cell(k), p);
            match &g2 {
                Some(g2) => data + mu * g2[k].powf(0.5 * p),
                None => data,
            }
        })
        .collect()
}

/// Solves `(I - tau k Lap) v_new = v - tau (A - B) - tau (nu / (c_W eps)) W'(v)`
/// with `k = 2 nu eps / c_W`, then clamps to `[0, 1]`.
pub fn update_v_step(
    state: &SegmentationState,
    u0: &MultiField,
    w: &DoubleWell,
    params: &EnergyParams,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    params.validate()?;
    cfg.validate()?;
    let g = *state.v.grid();
    g.check_same(u0.grid())?;
    let mu = match params.mu {
        Mu::Finite(m) => m,
        Mu::Infinite => 0.0,
    };
    let a = forcing(&state.c1, u0, mu, params.p);
    let b = forcing(&state.c2, u0, mu, params.p);
    let (nu, eps, cw, tau) = (params.nu, params.eps, w.cw(), cfg.tau);
    let react = nu / (cw * eps);
    let rhs: Vec<f64> = state
        .v
        .values()
        .iter()
        .enumerate()
        .map(|(k, &vk)| vk - tau * (a[k] - b[k]) - tau * react * w.deriv(vk))
        .collect();
    let ones = vec![1.0; g.len()];
    let op = WeightedOperator { grid: g, diag: &ones, edge: &ones, coef: tau * 2.0 * nu * eps / cw };
    let mut x = state.v.values().to_vec();
    conjugate_gradient(&op, &rhs, &mut x, cfg.cg_tol.min(1e-12), cfg.cg_max)?;
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    ScalarField::new(g, x)
}

/// Largest `|W''|` on `[0, 1]`, by central differences of `W'`.
fn curvature_bound(w: &DoubleWell) -> f64 {
    let h = 1e-4;
    (0..=200)
        .map(|i| {
            let t = i as f64 / 200.0;
            ((w.deriv(t + h) - w.deriv(t - h)) / (2.0 * h)).abs()
        })
        .fold(0.0, f64::max)
        .max(1e-12)
}

/// Two-means split of the channel average, smoothed and perturbed by
/// seeded uniform noise of amplitude 0.01; fields fitted on it.
pub fn initial_state(u0: &MultiField, params: &EnergyParams, cfg: &SolverConfig) -> Result<SegmentationState> {
    let g = *u0.grid();
    let mean = u0.channel_mean();
    let vals = mean.values();
    let (lo, hi) = (mean.min(), mean.max());
    let mut t = 0.5 * (lo + hi);
    for _ in 0..100 {
        let (mut s1, mut n1, mut s2, mut n2) = (0.0, 0usize, 0.0, 0usize);
        for &x in vals {
            if x > t {
                s1 += x;
                n1 += 1;
            } else {
                s2 += x;
                n2 += 1;
            }
        }
        if n1 == 0 || n2 == 0 {
            break;
        }
        let next = 0.5 * (s1 / n1 as f64 + s2 / n2 as f64);
        if next == t {
            break;
        }
        t = next;
    }
    let mut v: Vec<f64> = vals.iter().map(|&x| if x > t { 1.0 } else { 0.0 }).collect();
    for _ in 0..2 {
        let prev = v.clone();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                let mut acc = prev[k];
                let mut cnt = 1.0;
                let mut add = |nb: usize| {
                    acc += prev[nb];
                    cnt += 1.0;
                };
                if i > 0 {
                    add(k - 1);
                }
                if i + 1 < g.nx {
                    add(k + 1);
                }
                if j > 0 {
                    add(k - g.nx);
                }
                if j + 1 < g.ny {
                    add(k + g.nx);
                }
                v[k] = acc / cnt;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for x in v.iter_mut() {
        *x = (*x + rng.gen_range(-0.01..=0.01)).clamp(0.0, 1.0);
    }
    let v = ScalarField::new(g, v)?;
    let zeros = vec![0.0; u0.channels()];
    let fit = fit_constants(&v, u0, params.p, [&zeros, &zeros])?;
    let c1 = MultiField::constant(g, &fit.c1);
    let c2 = MultiField::constant(g, &fit.c2);
    let (c1, c2) = match (cfg.mode, params.mu) {
        (Mode::Smooth, Mu::Finite(_)) => fit_smooth_fields(&v, u0, params, cfg, (&c1, &c2))?,
        _ => (c1, c2),
    };
    SegmentationState::new(v, c1, c2)
}

/// Result of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub state: SegmentationState,
    /// Energy after initialization and after every outer iteration.
    pub trace: Vec<EnergyBreakdown>,
    pub iterations: usize,
    pub converged: bool,
}

/// Plain-form energy used by the scheme; `mu = inf` counts as constant
/// fields without gradient cost.
fn scheme_energy(
    state: &SegmentationState,
    u0: &MultiField,
    w: &DoubleWell,
    params: &EnergyParams,
) -> Result<EnergyBreakdown> {
    let mut p = params.with_normalized(false);
    if p.mu.is_infinite() {
        p.mu = Mu::Finite(0.0);
    }
    at_energy(state, u0, w, &p)
}

/// Alternates field fits and clamped v steps until the relative energy
/// decrease of an outer iteration drops below `cfg.tol`.
pub fn minimize(
    u0: &MultiField,
    w: &DoubleWell,
    params: &EnergyParams,
    cfg: &SolverConfig,
    init: Option<SegmentationState>,
) -> Result<Solution> {
    params.validate()?;
    cfg.validate()?;
    let mode = if params.mu.is_infinite() { Mode::PiecewiseConstant } else { cfg.mode };
    let mut state = match init {
        Some(s) => {
            s.v.grid().check_same(u0.grid())?;
            if s.c1.channels() != u0.channels() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} channels", u0.channels()),
                    found: format!("{} channels", s.c1.channels()),
                });
            }
            let clamped: Vec<f64> = s.v.values().iter().map(|x| x.clamp(0.0, 1.0)).collect();
            SegmentationState { v: ScalarField::new(*s.v.grid(), clamped)?, ..s }
        }
        None => initial_state(u0, params, &SolverConfig { mode, ..*cfg })?,
    };
    let g = *u0.grid();
    let tau_max = cfg.tau.min(1.8 * w.cw() * params.eps / (params.nu * curvature_bound(w)));
    let mut tau = tau_max;
    let mut energy = scheme_energy(&state, u0, w, params)?;
    let mut trace = vec![energy];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_outer {
        iterations += 1;
        let start = energy.total;

        let candidate = match mode {
            Mode::PiecewiseConstant => {
                let fallback = (state.c1.cell(0).to_vec(), state.c2.cell(0).to_vec());
                let fit = fit_constants(&state.v, u0, params.p, [&fallback.0, &fallback.1])?;
                SegmentationState {
                    v: state.v.clone(),
                    c1: MultiField::constant(g, &fit.c1),
                    c2: MultiField::constant(g, &fit.c2),
                }
            }
            Mode::Smooth => {
                let (c1, c2) = fit_smooth_fields(&state.v, u0, params, cfg, (&state.c1, &state.c2))?;
                SegmentationState { v: state.v.clone(), c1, c2 }
            }
        };
        let e = scheme_energy(&candidate, u0, w, params)?;
        if e.total <= energy.total {
            state = candidate;
            energy = e;
        }

        let mut stalled = false;
        loop {
            let step_cfg = SolverConfig { tau, ..*cfg };
            let v = update_v_step(&state, u0, w, params, &step_cfg)?;
            let trial = SegmentationState { v, c1: state.c1.clone(), c2: state.c2.clone() };
            let e = scheme_energy(&trial, u0, w, params)?;
            if e.total <= energy.total {
                state = trial;
                energy = e;
                tau = (tau * 1.25).min(tau_max);
                break;
            }
            let rounding = e.total - energy.total <= 1e-12 * energy.total.abs().max(1e-300);
            tau *= 0.5;
            if tau < MIN_TAU {
                if rounding {
                    // even the smallest step only changes the energy by rounding
                    stalled = true;
                    tau = tau_max;
                    break;
                }
                return Err(Error::NoProgress { tau });
            }
        }
        trace.push(energy);
        let decrease = start - energy.total;
        if stalled || decrease <= cfg.tol * start.abs().max(1e-300) {
            converged = true;
            break;
        }
    }
    Ok(Solution { state, trace, iterations, converged })
}

/// Pure Ginzburg-Landau flow of `v` (no data forcing) until the relative
/// change of the GL energy per step drops below `tol`.
pub fn relax_gl(v: ScalarField, w: &DoubleWell, eps: f64, tol: f64, max_steps: usize) -> Result<(ScalarField, usize)> {
    let g = *v.grid();
    let zero = MultiField::constant(g, &[0.0]);
    let params = EnergyParams::new(2.0, Mu::Finite(0.0), 1.0, eps, false)?;
    let tau = 1.8 * w.cw() * eps / curvature_bound(w);
    let cfg = SolverConfig { tau, ..SolverConfig::default() };
    let mut state = SegmentationState::new(v, zero.clone(), zero.clone())?;
    let mut energy = crate::energy::gl_energy(&state.v, w, eps);
    let mut change = f64::INFINITY;
    for step in 1..=max_steps {
        let v = update_v_step(&state, &zero, w, &params, &cfg)?;
        let e = crate::energy::gl_energy(&v, w, eps);
        change = (energy - e).abs() / energy.max(1e-300);
        state.v = v;
        energy = e;
        if change <= tol {
            return Ok((state.v, step));
        }
    }
    Err(Error::NonStationary { iterations: max_steps, change })
}
