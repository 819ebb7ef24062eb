//! Ladder experiments: epsilon and mu sweeps with energy-gap reports, the
//! one-dimensional interface energy check, Minkowski-content studies and
//! seeded synthetic images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::energy::{at_energy, gl_energy, limit_energy, pc_energy_eps, pc_limit_energy, EnergyParams, Mu};
use crate::error::{Error, Result};
use crate::grid::{
    discrete_perimeter, minkowski_volume, threshold_half, tv_isotropic, Grid, IndicatorField, MultiField, ScalarField,
};
use crate::potential::DoubleWell;
use crate::solver::{fit_constants, fit_smooth_fields, minimize, relax_gl, SegmentationState, SolverConfig};
use crate::transport::clp_distance;

/// Environment variable capping the worker count of parallel sweeps.
pub const THREADS_ENV: &str = "GAMMASEG_THREADS";

/// Relative GL energy change per step treated as stationary.
pub const MM_TOL: f64 = 1e-12;
pub const MM_MAX_STEPS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub enum MuRule {
    Fixed(Mu),
    /// One value per ladder point.
    Sequence(Vec<f64>),
    /// `mu0 / eps^alpha`.
    Divergent {
        mu0: f64,
        alpha: f64,
    },
}

impl MuRule {
    pub fn mu_at(&self, index: usize, eps: f64) -> Mu {
        match self {
            MuRule::Fixed(m) => *m,
            MuRule::Sequence(s) => Mu::Finite(s[index]),
            MuRule::Divergent { mu0, alpha } => Mu::Finite(mu0 / eps.powf(*alpha)),
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, MuRule::Divergent { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub eps_ladder: Vec<f64>,
    pub mu_rule: MuRule,
    pub nu: f64,
    pub p: f64,
    /// Replicate seeds; the first one drives single-report sweeps.
    pub seeds: Vec<u64>,
    /// Start each ladder point from the previous converged state.
    pub warm_start: bool,
}

impl SweepPlan {
    pub fn new(eps_ladder: Vec<f64>, mu_rule: MuRule, nu: f64, p: f64) -> Result<Self> {
        let plan = SweepPlan { eps_ladder, mu_rule, nu, p, seeds: vec![0], warm_start: true };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn with_warm_start(mut self, warm: bool) -> Self {
        self.warm_start = warm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.eps_ladder;
        if l.len() < 3 {
            return Err(Error::InvalidParameter(format!("eps ladder needs at least 3 points, got {}", l.len())));
        }
        if l.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidParameter("eps ladder entries must be positive and finite".into()));
        }
        if l.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("eps ladder must be strictly decreasing".into()));
        }
        if let MuRule::Sequence(s) = &self.mu_rule {
            if s.len() != l.len() {
                return Err(Error::InvalidParameter(format!(
                    "mu sequence has {} entries for {} ladder points",
                    s.len(),
                    l.len()
                )));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("at least one seed is required".into()));
        }
        for (i, &e) in l.iter().enumerate() {
            self.params_at(i, e)?;
        }
        Ok(())
    }

    /// Plain-form parameters at ladder point `index`.
    pub fn params_at(&self, index: usize, eps: f64) -> Result<EnergyParams> {
        EnergyParams::new(self.p, self.mu_rule.mu_at(index, eps), self.nu, eps, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GammaRow {
    pub eps: f64,
    /// `inf` for the piecewise-constant branch.
    pub mu: f64,
    pub e_at_norm: f64,
    pub e_limit: f64,
    pub gap: f64,
    pub l1_gap: f64,
    pub tv_v: f64,
    pub gl_over_tv: f64,
    pub d_clp: f64,
    pub data1: f64,
    pub data2: f64,
    pub grad1: f64,
    pub grad2: f64,
    pub gl: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GammaReport {
    pub rows: Vec<GammaRow>,
    /// Converged states in ladder order.
    pub states: Vec<SegmentationState>,
    /// Thresholded masks in ladder order.
    pub masks: Vec<IndicatorField>,
}

fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse::<usize>().ok()) {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

fn at_ladder(eps: f64) -> impl Fn(Error) -> Error {
    move |e| Error::AtLadderPoint { eps, source: Box::new(e) }
}

/// Thresholded state with refit fields: constants for `mu = inf`, a smooth
/// refit from the current fields otherwise.
pub fn limit_state(
    state: &SegmentationState,
    u0: &MultiField,
    params: &EnergyParams,
    cfg: &SolverConfig,
) -> Result<(IndicatorField, SegmentationState)> {
    let mask = threshold_half(&state.v);
    let chi = mask.to_scalar();
    let g = *u0.grid();
    let (c1, c2) = match params.mu {
        Mu::Infinite => {
            let fit = fit_constants(&chi, u0, params.p, [state.c1.cell(0), state.c2.cell(0)])?;
            (MultiField::constant(g, &fit.c1), MultiField::constant(g, &fit.c2))
        }
        Mu::Finite(_) => fit_smooth_fields(&chi, u0, params, cfg, (&state.c1, &state.c2))?,
    };
    Ok((mask, SegmentationState::new(chi, c1, c2)?))
}

fn report_row(
    state: &SegmentationState,
    u0: &MultiField,
    w: &DoubleWell,
    params: &EnergyParams,
    cfg: &SolverConfig,
) -> Result<(GammaRow, IndicatorField)> {
    let norm = params.with_normalized(true);
    let (mask, lim) = limit_state(state, u0, params, cfg)?;
    let e_limit = limit_energy(&lim, u0, &norm)?;
    // the mu = inf branch is evaluated on the constants themselves
    let e_at = match params.mu {
        Mu::Infinite => at_energy(state, u0, w, &norm.with_mu(Mu::Finite(0.0)))?,
        Mu::Finite(_) => at_energy(state, u0, w, &norm)?,
    };
    let tv_v = tv_isotropic(&state.v);
    let gl = gl_energy(&state.v, w, params.eps);
    let row = GammaRow {
        eps: params.eps,
        mu: params.mu.value(),
        e_at_norm: e_at.total,
        e_limit: e_limit.total,
        gap: e_at.total - e_limit.total,
        l1_gap: state.v.l1_distance(&lim.v)?,
        tv_v,
        gl_over_tv: if tv_v > 0.0 { gl / (w.cw() * tv_v) } else { 0.0 },
        d_clp: 0.0,
        data1: e_at.data1,
        data2: e_at.data2,
        grad1: e_at.grad1,
        grad2: e_at.grad2,
        gl: e_at.gl,
    };
    Ok((row, mask))
}

fn sweep_with_seed(
    u0: &MultiField,
    w: &DoubleWell,
    plan: &SweepPlan,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<GammaReport> {
    plan.validate()?;
    let cfg = SolverConfig { seed, ..*cfg };
    let solve = |i: usize, eps: f64, init: Option<SegmentationState>| -> Result<SegmentationState> {
        let params = plan.params_at(i, eps)?;
        minimize(u0, w, &params, &cfg, init).map(|s| s.state).map_err(at_ladder(eps))
    };
    let states: Vec<SegmentationState> = if plan.warm_start {
        let mut out: Vec<SegmentationState> = Vec::with_capacity(plan.eps_ladder.len());
        for (i, &eps) in plan.eps_ladder.iter().enumerate() {
            let s = solve(i, eps, out.last().cloned())?;
            out.push(s);
        }
        out
    } else {
        pool()?.install(|| {
            plan.eps_ladder.par_iter().enumerate().map(|(i, &eps)| solve(i, eps, None)).collect::<Result<Vec<_>>>()
        })?
    };

    let finest = states.last().expect("ladder is nonempty");
    let mut report = GammaReport::default();
    for (i, (state, &eps)) in states.iter().zip(&plan.eps_ladder).enumerate() {
        let params = plan.params_at(i, eps)?;
        let (mut row, mask) = report_row(state, u0, w, &params, &cfg).map_err(at_ladder(eps))?;
        row.d_clp = clp_distance(state, finest, plan.p).map_err(at_ladder(eps))?;
        report.rows.push(row);
        report.masks.push(mask);
    }
    report.states = states;
    Ok(report)
}

/// Runs `minimize` along the epsilon ladder and reports both energies, the
/// gaps and the CL^p distance of every state to the finest one.
pub fn epsilon_sweep(u0: &MultiField, w: &DoubleWell, plan: &SweepPlan, cfg: &SolverConfig) -> Result<GammaReport> {
    sweep_with_seed(u0, w, plan, cfg, plan.seeds[0])
}

/// One report per replicate seed.
pub fn epsilon_sweep_replicates(
    u0: &MultiField,
    w: &DoubleWell,
    plan: &SweepPlan,
    cfg: &SolverConfig,
) -> Result<Vec<GammaReport>> {
    plan.validate()?;
    pool()?.install(|| plan.seeds.par_iter().map(|&s| sweep_with_seed(u0, w, plan, cfg, s)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuPlan {
    pub eps: f64,
    /// Strictly increasing.
    pub mu_ladder: Vec<f64>,
    pub nu: f64,
    pub p: f64,
}

impl MuPlan {
    pub fn validate(&self) -> Result<()> {
        if self.mu_ladder.is_empty() || self.mu_ladder.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidParameter("mu ladder must hold positive finite values".into()));
        }
        if self.mu_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("mu ladder must be strictly increasing".into()));
        }
        EnergyParams::new(self.p, Mu::Finite(self.mu_ladder[0]), self.nu, self.eps, false).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuRow {
    pub mu: f64,
    /// Within-segment standard deviation of each field over its thresholded segment.
    pub std: [f64; 2],
    /// Within-segment standard deviation of `u0` on the same segments.
    pub u0_std: [f64; 2],
    /// Largest distance of the field on its segment to the mean of `u0`
    /// under the phase weight (`|v|` or `|1-v|`), relative to that mean.
    pub rel_dev: [f64; 2],
    pub energy: f64,
}

fn segment_stats(c: &MultiField, u0: &MultiField, mask: &[bool], weights: &[f64]) -> (f64, f64, f64) {
    let m = c.channels();
    let cells: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
    if cells.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = cells.len() as f64;
    let std = |f: &MultiField| {
        let mean: Vec<f64> = (0..m).map(|ch| cells.iter().map(|&k| f.cell(k)[ch]).sum::<f64>() / n).collect();
        let var = cells
            .iter()
            .map(|&k| f.cell(k).iter().zip(&mean).map(|(x, mu)| (x - mu) * (x - mu)).sum::<f64>())
            .sum::<f64>()
            / n;
        var.sqrt()
    };
    let wsum: f64 = weights.iter().sum();
    let wmean: Vec<f64> = (0..m)
        .map(|ch| {
            weights.iter().enumerate().map(|(k, w)| w * u0.cell(k)[ch]).sum::<f64>() / wsum.max(f64::MIN_POSITIVE)
        })
        .collect();
    let scale = wmean.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let dev = cells
        .iter()
        .map(|&k| c.cell(k).iter().zip(&wmean).map(|(x, mu)| (x - mu) * (x - mu)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    (std(c), std(u0), dev / scale)
}

/// Smooth-mode minimizers at fixed epsilon along an increasing mu ladder,
/// each warm-started from the previous one.
pub fn mu_sweep(u0: &MultiField, w: &DoubleWell, plan: &MuPlan, cfg: &SolverConfig) -> Result<Vec<MuRow>> {
    plan.validate()?;
    let mut rows = Vec::with_capacity(plan.mu_ladder.len());
    let mut prev: Option<SegmentationState> = None;
    for &mu in &plan.mu_ladder {
        let params = EnergyParams::new(plan.p, Mu::Finite(mu), plan.nu, plan.eps, false)?;
        let sol = minimize(u0, w, &params, cfg, prev.take()).map_err(at_ladder(plan.eps))?;
        let s = &sol.state;
        let mask = threshold_half(&s.v);
        let inside = mask.mask().to_vec();
        let outside: Vec<bool> = inside.iter().map(|b| !b).collect();
        let w1: Vec<f64> = s.v.values().iter().map(|x| x.abs()).collect();
        let w2: Vec<f64> = s.v.values().iter().map(|x| (1.0 - x).abs()).collect();
        let (s1, u1, d1) = segment_stats(&s.c1, u0, &inside, &w1);
        let (s2, u2, d2) = segment_stats(&s.c2, u0, &outside, &w2);
        rows.push(MuRow {
            mu,
            std: [s1, s2],
            u0_std: [u1, u2],
            rel_dev: [d1, d2],
            energy: sol.trace.last().map_or(f64::NAN, |e| e.total),
        });
        prev = Some(sol.state);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcRow {
    pub eps: f64,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    /// Constants refit on the thresholded set.
    pub c1_limit: Vec<f64>,
    pub c2_limit: Vec<f64>,
    pub e_eps: f64,
    pub e_limit: f64,
    pub gap: f64,
    /// Largest entry of `|c_eps - c_limit|` over both constants.
    pub const_change: f64,
    pub tv_v: f64,
    pub mask: IndicatorField,
}

/// Piecewise-constant ladder: phase-field energy of each converged state
/// against the sharp energy of its thresholded set with refit constants.
pub fn pc_gamma_check(u0: &MultiField, w: &DoubleWell, plan: &SweepPlan, cfg: &SolverConfig) -> Result<Vec<PcRow>> {
    plan.validate()?;
    let cfg = SolverConfig { seed: plan.seeds[0], ..*cfg };
    let mut rows = Vec::with_capacity(plan.eps_ladder.len());
    let mut prev: Option<SegmentationState> = None;
    for &eps in &plan.eps_ladder {
        let params = EnergyParams::new(plan.p, Mu::Infinite, plan.nu, eps, false)?;
        let init = if plan.warm_start { prev.take() } else { None };
        let state = minimize(u0, w, &params, &cfg, init).map_err(at_ladder(eps))?.state;
        let (c1, c2) = (state.c1.cell(0).to_vec(), state.c2.cell(0).to_vec());
        let row = (|| -> Result<PcRow> {
            let (mask, lim) = limit_state(&state, u0, &params, &cfg)?;
            let (l1, l2) = (lim.c1.cell(0).to_vec(), lim.c2.cell(0).to_vec());
            let e_eps = pc_energy_eps(&state.v, &c1, &c2, u0, w, &params)?;
            let e_limit = pc_limit_energy(&mask, &l1, &l2, u0, &params)?;
            let const_change =
                c1.iter().zip(l1.iter()).chain(c2.iter().zip(&l2)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok(PcRow {
                eps,
                c1,
                c2,
                c1_limit: l1,
                c2_limit: l2,
                e_eps,
                e_limit,
                gap: e_eps - e_limit,
                const_change,
                tv_v: tv_isotropic(&state.v),
                mask,
            })
        })()
        .map_err(at_ladder(eps))?;
        rows.push(row);
        prev = Some(state);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmRow {
    pub eps: f64,
    pub gl: f64,
    /// `gl / (c_W * jumps)`.
    pub ratio: f64,
    pub steps: usize,
}

/// Relaxes a step profile with `jumps` equally spaced interfaces on `[0, 1]`
/// under the GL flow and reports the stationary energy per ladder point.
pub fn modica_mortola_1d(w: &DoubleWell, eps_ladder: &[f64], n_cells: usize, jumps: usize) -> Result<Vec<MmRow>> {
    if n_cells < 1024 {
        return Err(Error::InvalidParameter(format!("need at least 1024 cells, got {n_cells}")));
    }
    if jumps == 0 {
        return Err(Error::InvalidParameter("at least one interface is required".into()));
    }
    if eps_ladder.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidParameter("eps must be positive and finite".into()));
    }
    let grid = Grid::interval(n_cells, 1.0)?;
    let v0 = ScalarField::from_fn(grid, |[x, _]| ((x * (jumps + 1) as f64).floor() as usize % 2) as f64)?;
    eps_ladder
        .iter()
        .map(|&eps| {
            let (v, steps) = relax_gl(v0.clone(), w, eps, MM_TOL, MM_MAX_STEPS).map_err(at_ladder(eps))?;
            let gl = gl_energy(&v, w, eps);
            Ok(MmRow { eps, gl, ratio: gl / (w.cw() * jumps as f64), steps })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinkowskiRow {
    pub a: f64,
    pub volume: f64,
    /// `volume / (2a)`.
    pub content: f64,
    pub perimeter: f64,
    /// `content / perimeter - 1`.
    pub deviation: f64,
}

pub fn minkowski_study(e: &IndicatorField, a_ladder: &[f64]) -> Result<Vec<MinkowskiRow>> {
    if e.is_degenerate() {
        return Err(Error::DegenerateSet("minkowski study needs a nondegenerate set"));
    }
    let perimeter = discrete_perimeter(e);
    a_ladder
        .iter()
        .map(|&a| {
            let volume = minkowski_volume(e, a)?;
            let content = volume / (2.0 * a);
            Ok(MinkowskiRow { a, volume, content, perimeter, deviation: content / perimeter - 1.0 })
        })
        .collect()
}

/// Seeded synthetic test images on the unit square.
pub mod synthetic {
    use super::*;

    fn noisy(grid: Grid, amplitude: f64, seed: u64, f: impl Fn([f64; 2]) -> f64) -> Result<MultiField> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = grid
            .centers()
            .into_iter()
            .map(|x| {
                let n = if amplitude > 0.0 { rng.gen_range(-amplitude..=amplitude) } else { 0.0 };
                f(x) + n
            })
            .collect();
        MultiField::new(grid, 1, values)
    }

    /// Right half at `high`, left half at `low`, plus uniform noise in
    /// `[-amplitude, amplitude]`.
    pub fn half_split(n: usize, low: f64, high: f64, amplitude: f64, seed: u64) -> Result<MultiField> {
        noisy(Grid::unit_square(n)?, amplitude, seed, |[x, _]| if x > 0.5 { high } else { low })
    }

    /// Disc of radius `r` at the center at `high` on a `low` background.
    pub fn disc(n: usize, r: f64, low: f64, high: f64, amplitude: f64, seed: u64) -> Result<MultiField> {
        noisy(Grid::unit_square(n)?, amplitude, seed, |[x, y]| {
            if (x - 0.5).powi(2) + (y - 0.5).powi(2) < r * r {
                high
            } else {
                low
            }
        })
    }

    /// Half split at levels 0.25 and 0.75, both shaded by
    /// `(shade / 2) cos(pi y)`.
    pub fn shaded_split(n: usize, shade: f64, amplitude: f64, seed: u64) -> Result<MultiField> {
        noisy(Grid::unit_square(n)?, amplitude, seed, |[x, y]| {
            let s = 0.5 * shade * (std::f64::consts::PI * y).cos();
            if x > 0.5 {
                0.75 + s
            } else {
                0.25 + s
            }
        })
    }

    /// Large disc plus a field of small seeded square specks, all at `high`
    /// on a `low` background, with uniform noise.
    pub fn textured(n: usize, specks: usize, amplitude: f64, seed: u64) -> Result<MultiField> {
        let grid = Grid::unit_square(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let squares: Vec<([f64; 2], f64)> = (0..specks)
            .map(|_| {
                let side = rng.gen_range(1.5..3.5) / n as f64;
                ([rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)], side)
            })
            .collect();
        noisy(grid, amplitude, seed, |[x, y]| {
            let in_disc = (x - 0.5).powi(2) + (y - 0.5).powi(2) < 0.25 * 0.25;
            let in_speck = squares.iter().any(|(c, s)| (x - c[0]).abs() < *s && (y - c[1]).abs() < *s);
            if in_disc || in_speck {
                0.8
            } else {
                0.2
            }
        })
    }
}

#[cfg(test)]
mod tests;
