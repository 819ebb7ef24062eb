//! Discrete evaluation of the phase-field and sharp-interface functionals.
//!
//! All integrals are midpoint sums over cells. The `normalized` form weighs
//! the data and gradient terms of each phase by the probability measures
//! `lambda_v = |v| / ||v||_1` and `lambda_{1-v}`; the plain form weighs them
//! by `|v|` and `|1 - v|` directly. The Ginzburg-Landau and TV terms are the
//! same in both forms.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{gradient_forward, gradient_norm_sq, tv_isotropic, IndicatorField, MultiField, ScalarField};
use crate::potential::DoubleWell;
use crate::solver::SegmentationState;
use crate::transport::DiscreteMeasure;

/// Cellwise tolerance for "v is an indicator".
pub const INDICATOR_TOL: f64 = 1e-9;
/// Relative deviation below which a field counts as constant on its segment.
pub const CONSTANCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mu {
    Finite(f64),
    Infinite,
}

impl Mu {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Mu::Infinite)
    }

    /// The value as a float, `+inf` for [`Mu::Infinite`].
    pub fn value(&self) -> f64 {
        match self {
            Mu::Finite(m) => *m,
            Mu::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub p: f64,
    pub mu: Mu,
    pub nu: f64,
    pub eps: f64,
    pub normalized: bool,
}

impl EnergyParams {
    pub fn new(p: f64, mu: Mu, nu: f64, eps: f64, normalized: bool) -> Result<Self> {
        let params = EnergyParams { p, mu, nu, eps, normalized };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must lie in (1, inf), got {}", self.p)));
        }
        if let Mu::Finite(m) = self.mu {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::InvalidParameter(format!("mu must be >= 0, got {m}")));
            }
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu must be > 0, got {}", self.nu)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }

    pub fn with_eps(self, eps: f64) -> Self {
        EnergyParams { eps, ..self }
    }

    pub fn with_mu(self, mu: Mu) -> Self {
        EnergyParams { mu, ..self }
    }

    pub fn with_normalized(self, normalized: bool) -> Self {
        EnergyParams { normalized, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measures {
    pub lam_v: DiscreteMeasure,
    pub lam_1mv: DiscreteMeasure,
}

/// `lambda_v` and `lambda_{1-v}` as measures on the cell centers.
pub fn measures_from(v: &ScalarField) -> Measures {
    let g = *v.grid();
    let centers = g.centers();
    let dv: Vec<f64> = v.values().iter().map(|x| x.abs()).collect();
    let d1: Vec<f64> = v.values().iter().map(|x| (1.0 - x).abs()).collect();
    Measures {
        lam_v: DiscreteMeasure::from_density(centers.clone(), &dv),
        lam_1mv: DiscreteMeasure::from_density(centers, &d1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub data1: f64,
    pub data2: f64,
    pub grad1: f64,
    pub grad2: f64,
    pub gl: f64,
    pub tv_term: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    /// The `+inf` sentinel of the extended-real functionals.
    pub fn infinite() -> Self {
        EnergyBreakdown { total: f64::INFINITY, ..Default::default() }
    }

    pub fn is_infinite(&self) -> bool {
        self.total == f64::INFINITY
    }

    fn summed(mut self) -> Self {
        self.total = self.data1 + self.data2 + self.grad1 + self.grad2 + self.gl + self.tv_term;
        self
    }
}

/// `int eps |grad v|^2 + W(v) / eps`.
pub fn gl_energy(v: &ScalarField, w: &DoubleWell, eps: f64) -> f64 {
    let area = v.grid().cell_area();
    let grad = gradient_forward(v);
    v.values().iter().zip(&grad).map(|(&x, [gx, gy])| eps * (gx * gx + gy * gy) + w.eval(x) / eps).sum::<f64>() * area
}

fn check_shapes(state: &SegmentationState, u0: &MultiField) -> Result<()> {
    let g = state.v.grid();
    g.check_same(u0.grid())?;
    g.check_same(state.c1.grid())?;
    g.check_same(state.c2.grid())?;
    for c in [&state.c1, &state.c2] {
        if c.channels() != u0.channels() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} channels", u0.channels()),
                found: format!("{} channels", c.channels()),
            });
        }
    }
    Ok(())
}

#[inline]
fn misfit_pow(a: &[f64], b: &[f64], p: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    if p == 2.0 {
        sq
    } else {
        sq.powf(0.5 * p)
    }
}

/// `sum_k w_k |c_k - u0_k|^p`.
pub(crate) fn weighted_misfit(c: &MultiField, u0: &MultiField, weights: &[f64], p: f64) -> f64 {
    weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(k, w)| w * misfit_pow(c.cell(k), u0.cell(k), p)).sum()
}

/// `sum_k w_k |grad c|_k^p`, differences restricted to the support of `w`.
pub(crate) fn weighted_gradient(c: &MultiField, weights: &[f64], p: f64) -> f64 {
    let support: Vec<bool> = weights.iter().map(|w| *w > 0.0).collect();
    let g2 = gradient_norm_sq(c, Some(&support));
    weights
        .iter()
        .zip(&g2)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, s)| if p == 2.0 { w * s } else { w * s.powf(0.5 * p) })
        .sum()
}

/// Per-cell weights of the two phases: `|v| A, |1-v| A` or the normalized
/// measures.
pub(crate) fn phase_weights(v: &ScalarField, normalized: bool) -> (Vec<f64>, Vec<f64>) {
    if normalized {
        let m = measures_from(v);
        (m.lam_v.into_weights(), m.lam_1mv.into_weights())
    } else {
        let area = v.grid().cell_area();
        (
            v.values().iter().map(|x| x.abs() * area).collect(),
            v.values().iter().map(|x| (1.0 - x).abs() * area).collect(),
        )
    }
}

/// Phase-field energy of a state, in the plain or measure-normalized form.
pub fn at_energy(
    state: &SegmentationState,
    u0: &MultiField,
    w: &DoubleWell,
    params: &EnergyParams,
) -> Result<EnergyBreakdown> {
    params.validate()?;
    check_shapes(state, u0)?;
    let mu = match params.mu {
        Mu::Finite(m) => m,
        Mu::Infinite => {
            return Err(Error::InvalidParameter("the phase-field energy needs a finite mu".into()));
        }
    };
    let p = params.p;
    let (w1, w2) = phase_weights(&state.v, params.normalized);
    let grad1 = if mu > 0.0 { mu * weighted_gradient(&state.c1, &w1, p) } else { 0.0 };
    let grad2 = if mu > 0.0 { mu * weighted_gradient(&state.c2, &w2, p) } else { 0.0 };
    Ok(EnergyBreakdown {
        data1: weighted_misfit(&state.c1, u0, &w1, p),
        data2: weighted_misfit(&state.c2, u0, &w2, p),
        grad1,
        grad2,
        gl: params.nu / w.cw() * gl_energy(&state.v, w, params.eps),
        tv_term: 0.0,
        total: 0.0,
    }
    .summed())
}

/// `(sum |grad c|^p dlambda)^(1/p)`, the weighted-gradient stand-in for the
/// metric-measure Sobolev seminorm.
pub fn sobolev_seminorm_proxy(c: &MultiField, lam: &DiscreteMeasure, p: f64) -> Result<f64> {
    if lam.is_zero() {
        return Err(Error::ZeroMeasure);
    }
    if lam.len() != c.grid().len() {
        return Err(Error::ShapeMismatch {
            expected: format!("measure on {} cells", c.grid().len()),
            found: format!("{} atoms", lam.len()),
        });
    }
    Ok(weighted_gradient(c, lam.weights(), p).powf(1.0 / p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HajlaszReport {
    pub passed: bool,
    pub pairs: usize,
    /// Largest `|c(x) - c(y)| - |x - y| (g(x) + g(y))` seen.
    pub max_violation: f64,
    pub worst_pair: Option<(usize, usize)>,
}

/// Samples random cell pairs in the support of `lam` and checks the
/// pointwise upper-gradient inequality for the candidate `g`.
pub fn hajlasz_pair_check(
    c: &MultiField,
    g: &ScalarField,
    lam: &DiscreteMeasure,
    samples: usize,
    seed: u64,
) -> Result<HajlaszReport> {
    c.grid().check_same(g.grid())?;
    if let Some(index) = g.values().iter().position(|x| *x < 0.0) {
        return Err(Error::InvalidParameter(format!("upper gradient candidate is negative at cell {index}")));
    }
    let support: Vec<usize> = lam.support();
    let mut report = HajlaszReport { passed: true, pairs: 0, max_violation: f64::NEG_INFINITY, worst_pair: None };
    if support.len() < 2 {
        report.max_violation = 0.0;
        return Ok(report);
    }
    let grid = c.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let a = support[rng.gen_range(0..support.len())];
        let b = support[rng.gen_range(0..support.len())];
        if a == b {
            continue;
        }
        let (xa, xb) = (grid.center(a), grid.center(b));
        let dist = (xa[0] - xb[0]).hypot(xa[1] - xb[1]);
        let jump = misfit_pow(c.cell(a), c.cell(b), 2.0).sqrt();
        let bound = dist * (g.values()[a] + g.values()[b]);
        let violation = jump - bound;
        report.pairs += 1;
        if violation > report.max_violation {
            report.max_violation = violation;
            report.worst_pair = Some((a, b));
        }
    }
    report.passed = report.max_violation <= 1e-12;
    Ok(report)
}

fn is_indicator(v: &ScalarField) -> bool {
    v.values().iter().all(|x| x.abs() <= INDICATOR_TOL || (x - 1.0).abs() <= INDICATOR_TOL)
}

/// Whether `c` is constant on the support of `weights`, up to
/// [`CONSTANCY_TOL`] relative deviation.
pub fn is_constant_on(c: &MultiField, weights: &[f64]) -> bool {
    let m = c.channels();
    let support: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] > 0.0).collect();
    let Some(&first) = support.first() else {
        return true;
    };
    let mut mean = vec![0.0; m];
    for &k in &support {
        for (acc, x) in mean.iter_mut().zip(c.cell(k)) {
            *acc += x;
        }
    }
    mean.iter_mut().for_each(|x| *x /= support.len() as f64);
    let scale = mean.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    let _ = first;
    support.iter().all(|&k| c.cell(k).iter().zip(&mean).all(|(x, mu)| (x - mu).abs() <= CONSTANCY_TOL * scale))
}

/// Sharp-interface limit functional. Finite only for indicator `v`; with
/// `mu = inf` the fields must also be constant on their segments.
pub fn limit_energy(state: &SegmentationState, u0: &MultiField, params: &EnergyParams) -> Result<EnergyBreakdown> {
    params.validate()?;
    check_shapes(state, u0)?;
    if !is_indicator(&state.v) {
        return Ok(EnergyBreakdown::infinite());
    }
    let p = params.p;
    let (w1, w2) = phase_weights(&state.v, params.normalized);
    let (grad1, grad2) = match params.mu {
        Mu::Finite(mu) if mu > 0.0 => {
            (mu * weighted_gradient(&state.c1, &w1, p), mu * weighted_gradient(&state.c2, &w2, p))
        }
        Mu::Finite(_) => (0.0, 0.0),
        Mu::Infinite => {
            if !is_constant_on(&state.c1, &w1) || !is_constant_on(&state.c2, &w2) {
                return Ok(EnergyBreakdown::infinite());
            }
            (0.0, 0.0)
        }
    };
    Ok(EnergyBreakdown {
        data1: weighted_misfit(&state.c1, u0, &w1, p),
        data2: weighted_misfit(&state.c2, u0, &w2, p),
        grad1,
        grad2,
        gl: 0.0,
        tv_term: params.nu * tv_isotropic(&state.v),
        total: 0.0,
    }
    .summed())
}

fn check_constants(c1: &[f64], c2: &[f64], u0: &MultiField) -> Result<()> {
    for c in [c1, c2] {
        if c.len() != u0.channels() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} channels", u0.channels()),
                found: format!("{} channels", c.len()),
            });
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("constants must be finite".into()));
        }
    }
    Ok(())
}

fn constant_misfit(c: &[f64], u0: &MultiField, weights: impl Iterator<Item = f64>, p: f64) -> f64 {
    weights.enumerate().filter(|(_, w)| *w > 0.0).map(|(k, w)| w * misfit_pow(c, u0.cell(k), p)).sum()
}

/// Piecewise-constant phase-field energy
/// `int |c1-u0|^p |v| + |c2-u0|^p |1-v| + (nu/c_W) GL_eps(v)`.
pub fn pc_energy_eps(
    v: &ScalarField,
    c1: &[f64],
    c2: &[f64],
    u0: &MultiField,
    w: &DoubleWell,
    params: &EnergyParams,
) -> Result<f64> {
    params.validate()?;
    v.grid().check_same(u0.grid())?;
    check_constants(c1, c2, u0)?;
    let area = v.grid().cell_area();
    let p = params.p;
    let d1 = constant_misfit(c1, u0, v.values().iter().map(|x| x.abs() * area), p);
    let d2 = constant_misfit(c2, u0, v.values().iter().map(|x| (1.0 - x).abs() * area), p);
    Ok(d1 + d2 + params.nu / w.cw() * gl_energy(v, w, params.eps))
}

/// Piecewise-constant sharp-interface energy
/// `int_E |c1-u0|^p + int_{E^c} |c2-u0|^p + nu TV(chi_E)`.
pub fn pc_limit_energy(
    e: &IndicatorField,
    c1: &[f64],
    c2: &[f64],
    u0: &MultiField,
    params: &EnergyParams,
) -> Result<f64> {
    params.validate()?;
    e.grid().check_same(u0.grid())?;
    check_constants(c1, c2, u0)?;
    let area = e.grid().cell_area();
    let p = params.p;
    let d1 = constant_misfit(c1, u0, e.mask().iter().map(|&b| if b { area } else { 0.0 }), p);
    let d2 = constant_misfit(c2, u0, e.mask().iter().map(|&b| if b { 0.0 } else { area }), p);
    Ok(d1 + d2 + params.nu * tv_isotropic(&e.to_scalar()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_abs_diff_eq;

    fn sq(n: usize) -> Grid {
        Grid::unit_square(n).unwrap()
    }

    fn left(n: usize) -> IndicatorField {
        IndicatorField::from_fn(sq(n), |[x, _]| x < 0.5)
    }

    fn params(mu: Mu, nu: f64, normalized: bool) -> EnergyParams {
        EnergyParams::new(2.0, mu, nu, 0.05, normalized).unwrap()
    }

    fn state(v: ScalarField, c1: MultiField, c2: MultiField) -> SegmentationState {
        SegmentationState::new(v, c1, c2).unwrap()
    }

    #[test]
    fn params_are_validated() {
        assert!(EnergyParams::new(1.0, Mu::Finite(1.0), 1.0, 0.1, true).is_err());
        assert!(EnergyParams::new(2.0, Mu::Finite(-1.0), 1.0, 0.1, true).is_err());
        assert!(EnergyParams::new(2.0, Mu::Infinite, 0.0, 0.1, true).is_err());
        assert!(EnergyParams::new(2.0, Mu::Infinite, 1.0, 0.0, true).is_err());
    }

    #[test]
    fn measures_of_half_indicator() {
        let m = measures_from(&left(8).to_scalar());
        assert_abs_diff_eq!(m.lam_v.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let g = sq(8);
        for (k, w) in m.lam_v.weights().iter().enumerate() {
            let expect = if g.center(k)[0] < 0.5 { 1.0 / 32.0 } else { 0.0 };
            assert_abs_diff_eq!(*w, expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn measures_of_constant_fields() {
        let g = sq(6);
        let m = measures_from(&ScalarField::constant(g, 0.0));
        assert!(m.lam_v.is_zero());
        assert!(m.lam_1mv.weights().iter().all(|w| (w - 1.0 / 36.0).abs() < 1e-15));
        let m = measures_from(&ScalarField::constant(g, 0.37));
        for lam in [&m.lam_v, &m.lam_1mv] {
            assert!(!lam.is_zero());
            assert!(lam.weights().iter().all(|w| (w - 1.0 / 36.0).abs() < 1e-15));
        }
    }

    #[test]
    fn gl_examples() {
        let w = DoubleWell::quartic();
        assert_eq!(gl_energy(&ScalarField::constant(sq(8), 0.0), &w, 0.1), 0.0);

        // ramp: eps * (1 - h) from the Neumann cell plus the midpoint sum of
        // W / eps, compared with a fine quadrature of int_0^1 W = 1/30
        let n = 2000;
        let g = Grid::interval(n, 1.0).unwrap();
        let ramp = ScalarField::from_fn(g, |[x, _]| x).unwrap();
        let quad: f64 = (0..200_000).map(|k| w.eval((k as f64 + 0.5) / 200_000.0)).sum::<f64>() / 200_000.0;
        assert_abs_diff_eq!(quad, 1.0 / 30.0, epsilon = 1e-10);
        let e = gl_energy(&ramp, &w, 1.0);
        assert_abs_diff_eq!(e, 1.0 + quad, epsilon = 2.0 / n as f64);
        assert_abs_diff_eq!(e, 1.033333, epsilon = 1e-3);

        // one sharp jump: eps / h exactly
        let n = 50;
        let g = Grid::interval(n, 1.0).unwrap();
        let step = ScalarField::from_fn(g, |[x, _]| if x < 0.5 { 0.0 } else { 1.0 }).unwrap();
        assert_abs_diff_eq!(gl_energy(&step, &w, 0.2), 0.2 * n as f64, epsilon = 1e-10);
    }

    #[test]
    fn gl_satisfies_discrete_modica_mortola_bound() {
        let w = DoubleWell::quartic();
        let n = 2048;
        let g = Grid::interval(n, 1.0).unwrap();
        for eps in [0.02, 0.05, 0.1] {
            for shape in [1.0, 0.7, 1.6] {
                let v = ScalarField::from_fn(g, |[x, _]| 1.0 / (1.0 + (-(x - 0.5) / (shape * eps)).exp())).unwrap();
                let grad = gradient_forward(&v);
                let mm: f64 = v.values().iter().zip(&grad).map(|(x, d)| d[0].abs() * w.eval(*x).sqrt()).sum::<f64>()
                    * g.cell_area();
                assert!(gl_energy(&v, &w, eps) >= (2.0 - 0.05) * mm);
            }
        }
    }

    #[test]
    fn perfect_fit_leaves_only_the_interface() {
        let n = 16;
        let g = sq(n);
        let e = left(n);
        let u0 = MultiField::from_fn(g, 1, |[x, _], c| c[0] = if x < 0.5 { 0.8 } else { 0.1 }).unwrap();
        let s = state(e.to_scalar(), MultiField::constant(g, &[0.8]), MultiField::constant(g, &[0.1]));
        let w = DoubleWell::quartic();
        for normalized in [false, true] {
            let p = params(Mu::Finite(3.0), 0.2, normalized);
            let b = at_energy(&s, &u0, &w, &p).unwrap();
            assert_eq!((b.data1, b.data2, b.grad1, b.grad2), (0.0, 0.0, 0.0, 0.0));
            assert_abs_diff_eq!(b.total, 0.2 / w.cw() * gl_energy(&e.to_scalar(), &w, 0.05), epsilon = 1e-12);
            let l = limit_energy(&s, &u0, &p).unwrap();
            assert_abs_diff_eq!(l.total, 0.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalization_doubles_half_square_data() {
        let n = 12;
        let g = sq(n);
        let u0 = MultiField::from_fn(g, 1, |[x, y], c| c[0] = x * y + 0.3).unwrap();
        let s = state(left(n).to_scalar(), MultiField::constant(g, &[0.1]), MultiField::constant(g, &[0.9]));
        let w = DoubleWell::quartic();
        let plain = at_energy(&s, &u0, &w, &params(Mu::Finite(1.0), 0.1, false)).unwrap();
        let norm = at_energy(&s, &u0, &w, &params(Mu::Finite(1.0), 0.1, true)).unwrap();
        assert_abs_diff_eq!(norm.data1, 2.0 * plain.data1, epsilon = 1e-12);
        assert_abs_diff_eq!(norm.data2, 2.0 * plain.data2, epsilon = 1e-12);
    }

    #[test]
    fn vector_data_term_vanishes_on_exact_constants() {
        let g = sq(5);
        let u0 = MultiField::constant(g, &[0.2, 0.7]);
        let v = ScalarField::from_fn(g, |[x, _]| x).unwrap();
        let s = state(v, MultiField::constant(g, &[0.2, 0.7]), MultiField::constant(g, &[0.0, 0.0]));
        for p in [1.5, 2.0, 3.0] {
            let par = EnergyParams::new(p, Mu::Finite(1.0), 1.0, 0.1, true).unwrap();
            assert_eq!(at_energy(&s, &u0, &DoubleWell::quartic(), &par).unwrap().data1, 0.0);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let s = state(
            ScalarField::constant(sq(4), 0.5),
            MultiField::constant(sq(4), &[0.0]),
            MultiField::constant(sq(4), &[0.0]),
        );
        let u0 = MultiField::constant(sq(5), &[0.0]);
        assert!(matches!(
            at_energy(&s, &u0, &DoubleWell::quartic(), &params(Mu::Finite(1.0), 1.0, true)),
            Err(Error::ShapeMismatch { .. })
        ));
        let u0 = MultiField::constant(sq(4), &[0.0, 1.0]);
        assert!(at_energy(&s, &u0, &DoubleWell::quartic(), &params(Mu::Finite(1.0), 1.0, true)).is_err());
    }

    #[test]
    fn seminorm_proxy_examples() {
        let n = 64;
        let g = sq(n);
        let h = 1.0 / n as f64;
        let uniform = DiscreteMeasure::from_density(g.centers(), &vec![1.0; g.len()]);
        assert_eq!(sobolev_seminorm_proxy(&MultiField::constant(g, &[2.0]), &uniform, 2.0).unwrap(), 0.0);
        let ramp = MultiField::from_fn(g, 1, |[x, _], c| c[0] = x).unwrap();
        assert_abs_diff_eq!(sobolev_seminorm_proxy(&ramp, &uniform, 2.0).unwrap(), 1.0, epsilon = h);
        let lam = measures_from(&left(n).to_scalar()).lam_v;
        // the last column of the half loses its outward difference
        assert_abs_diff_eq!(sobolev_seminorm_proxy(&ramp, &lam, 2.0).unwrap(), 1.0, epsilon = 2.0 * h);
        let zero = measures_from(&ScalarField::constant(g, 0.0)).lam_v;
        assert_eq!(sobolev_seminorm_proxy(&ramp, &zero, 2.0), Err(Error::ZeroMeasure));
    }

    #[test]
    fn hajlasz_examples() {
        let g = sq(16);
        let lam = DiscreteMeasure::from_density(g.centers(), &vec![1.0; g.len()]);
        let zero_g = ScalarField::constant(g, 0.0);
        let rep = hajlasz_pair_check(&MultiField::constant(g, &[1.0]), &zero_g, &lam, 500, 1).unwrap();
        assert!(rep.passed);
        let ramp = MultiField::from_fn(g, 1, |[x, _], c| c[0] = x).unwrap();
        assert!(hajlasz_pair_check(&ramp, &ScalarField::constant(g, 0.5), &lam, 500, 2).unwrap().passed);
        let jump = MultiField::from_fn(g, 1, |[x, _], c| c[0] = if x > 0.5 { 1.0 } else { 0.0 }).unwrap();
        let rep = hajlasz_pair_check(&jump, &zero_g, &lam, 500, 3).unwrap();
        assert!(!rep.passed);
        assert_abs_diff_eq!(rep.max_violation, 1.0);
    }

    #[test]
    fn limit_energy_sentinels() {
        let n = 16;
        let g = sq(n);
        let e = left(n);
        let u0 = MultiField::from_scalar(&e.to_scalar());
        let c1 = MultiField::constant(g, &[1.0]);
        let c2 = MultiField::constant(g, &[0.0]);
        let p = params(Mu::Infinite, 0.3, true);
        let exact = limit_energy(&state(e.to_scalar(), c1.clone(), c2.clone()), &u0, &p).unwrap();
        assert_abs_diff_eq!(exact.total, 0.3, epsilon = 1e-12);
        let half = limit_energy(&state(ScalarField::constant(g, 0.5), c1.clone(), c2.clone()), &u0, &p).unwrap();
        assert!(half.is_infinite());
        let ramp = MultiField::from_fn(g, 1, |[x, _], c| c[0] = 1.0 + x).unwrap();
        assert!(limit_energy(&state(e.to_scalar(), ramp, c2), &u0, &p).unwrap().is_infinite());
    }

    #[test]
    fn limit_energy_grows_with_mu() {
        let n = 16;
        let g = sq(n);
        let e = IndicatorField::from_fn(g, |[x, y]| x + 0.5 * y < 0.6);
        let u0 = MultiField::from_fn(g, 1, |[x, y], c| c[0] = (3.0 * x).sin() + y).unwrap();
        let c1 = MultiField::from_fn(g, 1, |[x, y], c| c[0] = x * y).unwrap();
        let c2 = MultiField::from_fn(g, 1, |[x, _], c| c[0] = x * x).unwrap();
        let s = state(e.to_scalar(), c1, c2);
        let mut last = f64::NEG_INFINITY;
        for mu in [0.0, 0.1, 1.0, 10.0, 100.0] {
            let t = limit_energy(&s, &u0, &params(Mu::Finite(mu), 0.2, true)).unwrap().total;
            assert!(t >= last);
            last = t;
        }
    }

    #[test]
    fn relabeling_symmetry() {
        let n = 12;
        let g = sq(n);
        let v = ScalarField::from_fn(g, |[x, y]| 0.5 + 0.4 * ((6.0 * x).sin() * (4.0 * y).cos())).unwrap();
        let u0 = MultiField::from_fn(g, 2, |[x, y], c| {
            c[0] = x;
            c[1] = y * y;
        })
        .unwrap();
        let c1 = MultiField::from_fn(g, 2, |[x, y], c| {
            c[0] = x + 0.1;
            c[1] = y;
        })
        .unwrap();
        let c2 = MultiField::from_fn(g, 2, |[x, y], c| {
            c[0] = 0.3 * y;
            c[1] = x - y;
        })
        .unwrap();
        for w in [DoubleWell::quartic(), DoubleWell::sine()] {
            for normalized in [false, true] {
                let p = params(Mu::Finite(0.7), 0.4, normalized);
                let a = at_energy(&state(v.clone(), c1.clone(), c2.clone()), &u0, &w, &p).unwrap();
                let b = at_energy(&state(v.complement(), c2.clone(), c1.clone()), &u0, &w, &p).unwrap();
                assert_abs_diff_eq!(a.total, b.total, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pc_energy_examples() {
        let n = 20;
        let g = sq(n);
        let e = left(n);
        let u0 = MultiField::from_fn(g, 1, |[x, _], c| c[0] = if x < 0.5 { 0.25 } else { 0.75 }).unwrap();
        let w = DoubleWell::quartic();
        let p = params(Mu::Infinite, 0.2, false);
        assert_abs_diff_eq!(pc_limit_energy(&e, &[0.25], &[0.75], &u0, &p).unwrap(), 0.2, epsilon = 1e-12);

        let one = ScalarField::constant(g, 1.0);
        let direct: f64 = u0.values().iter().map(|u| (0.6 - u).powi(2)).sum::<f64>() / (n * n) as f64;
        assert_abs_diff_eq!(pc_energy_eps(&one, &[0.6], &[0.1], &u0, &w, &p).unwrap(), direct, epsilon = 1e-12);

        // the data parts of the two energies agree on indicators
        let v = e.to_scalar();
        for (c1, c2) in [([0.3], [0.6]), ([0.25], [0.75]), ([1.0], [-0.2])] {
            let eps_e = pc_energy_eps(&v, &c1, &c2, &u0, &w, &p).unwrap();
            let lim = pc_limit_energy(&e, &c1, &c2, &u0, &p).unwrap();
            let expect = p.nu / w.cw() * gl_energy(&v, &w, p.eps) - p.nu * tv_isotropic(&v);
            assert_abs_diff_eq!(eps_e - lim, expect, epsilon = 1e-10);
        }
        assert!(pc_energy_eps(&v, &[0.1, 0.2], &[0.3], &u0, &w, &p).is_err());
    }
}
