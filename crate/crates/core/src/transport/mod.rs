//! Optimal transport between weighted point clouds carrying vector values.
//!
//! The transport cost between `(mu, f)` and `(lambda, g)` is
//! `c(x, y) = |x - y|^p + |f(x) - g(y)|^p`. Supports up to
//! [`EXACT_LIMIT`] atoms go through an exact network simplex; larger ones
//! fall back to entropic transport and are flagged approximate.

mod simplex;
mod sinkhorn;

use std::collections::HashMap;

use crate::energy::measures_from;
use crate::error::{Error, Result};
use crate::grid::MultiField;
use crate::solver::SegmentationState;

/// Largest support handled by the exact solver.
pub const EXACT_LIMIT: usize = 4096;
/// Default entropic regularization of the fallback path.
pub const SINKHORN_REG: f64 = 1e-3;
/// Cellwise tolerance of [`clp_equivalent`].
pub const EQUIV_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    zero: bool,
}

impl DiscreteMeasure {
    /// Probability measure from explicit weights (summing to one) or the
    /// zero measure when all weights vanish.
    pub fn new(points: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} weights", points.len()),
                found: format!("{}", weights.len()),
            });
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(format!("weight {index} is negative or non-finite")));
        }
        if let Some(index) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return Ok(DiscreteMeasure { points, weights, zero: true });
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        Ok(DiscreteMeasure { points, weights, zero: false })
    }

    /// Normalizes a nonnegative density; all-zero input gives the zero measure.
    pub fn from_density(points: Vec<[f64; 2]>, density: &[f64]) -> Self {
        assert_eq!(points.len(), density.len(), "density length must match the point count");
        let total: f64 = density.iter().sum();
        if total > 0.0 {
            let weights = density.iter().map(|d| d / total).collect();
            DiscreteMeasure { points, weights, zero: false }
        } else {
            let weights = vec![0.0; points.len()];
            DiscreteMeasure { points, weights, zero: true }
        }
    }

    pub fn uniform(points: Vec<[f64; 2]>) -> Self {
        let ones = vec![1.0; points.len()];
        Self::from_density(points, &ones)
    }

    pub fn zero(points: Vec<[f64; 2]>) -> Self {
        Self::from_density(points.clone(), &vec![0.0; points.len()])
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Indices of atoms with positive weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&k| self.weights[k] > 0.0).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `int phi dlambda`.
    pub fn integrate(&self, phi: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).filter(|(_, w)| **w > 0.0).map(|(x, w)| w * phi(*x)).sum()
    }
}

/// A measure together with an m-vector per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    measure: DiscreteMeasure,
    channels: usize,
    values: Vec<f64>,
}

impl PairedSample {
    pub fn new(measure: DiscreteMeasure, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || values.len() != measure.len() * channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", measure.len() * channels),
                found: format!("{}", values.len()),
            });
        }
        if let Some(index) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(PairedSample { measure, channels, values })
    }

    /// Pairs a measure on the cell centers with a field on the same grid.
    pub fn from_field(measure: DiscreteMeasure, field: &MultiField) -> Result<Self> {
        Self::new(measure, field.channels(), field.values().to_vec())
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.channels..(k + 1) * self.channels]
    }
}

/// Sparse transport plan between the supports of two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    source: Vec<[f64; 2]>,
    target: Vec<[f64; 2]>,
    source_weights: Vec<f64>,
    target_weights: Vec<f64>,
    entries: Vec<(usize, usize, f64)>,
}

impl Coupling {
    /// Validates nonnegativity and the marginals to `1e-9`.
    pub fn new(source: &DiscreteMeasure, target: &DiscreteMeasure, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        let c = Coupling {
            source: source.points.clone(),
            target: target.points.clone(),
            source_weights: source.weights.clone(),
            target_weights: target.weights.clone(),
            entries,
        };
        if c.entries.iter().any(|&(i, j, w)| i >= c.source.len() || j >= c.target.len() || !(w >= 0.0)) {
            return Err(Error::Transport("coupling entry out of range or negative".into()));
        }
        if c.marginal_error() > 1e-9 {
            return Err(Error::Transport(format!("coupling marginals off by {:e}", c.marginal_error())));
        }
        Ok(c)
    }

    /// The identity plan of a measure with itself.
    pub fn diagonal(lam: &DiscreteMeasure) -> Self {
        let entries = lam.support().into_iter().map(|k| (k, k, lam.weights[k])).collect();
        Coupling {
            source: lam.points.clone(),
            target: lam.points.clone(),
            source_weights: lam.weights.clone(),
            target_weights: lam.weights.clone(),
            entries,
        }
    }

    /// `(source atom, target atom, mass)` triples.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn source_points(&self) -> &[[f64; 2]] {
        &self.source
    }

    pub fn target_points(&self) -> &[[f64; 2]] {
        &self.target
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.source.len()];
        for &(i, _, w) in &self.entries {
            r[i] += w;
        }
        r
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.target.len()];
        for &(_, j, w) in &self.entries {
            c[j] += w;
        }
        c
    }

    /// Largest deviation of a row or column sum from its marginal.
    pub fn marginal_error(&self) -> f64 {
        let rows = self.row_sums().iter().zip(&self.source_weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let cols = self.col_sums().iter().zip(&self.target_weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rows.max(cols)
    }
}

#[inline]
fn dist(x: [f64; 2], y: [f64; 2]) -> f64 {
    (x[0] - y[0]).hypot(x[1] - y[1])
}

/// `sum pi(x, y) |x - y|^p`.
pub fn stagnation_cost(pi: &Coupling, p: f64) -> f64 {
    pi.entries.iter().map(|&(i, j, w)| w * dist(pi.source[i], pi.target[j]).powf(p)).sum()
}

/// Barycentric projection `T(x) = sum_y pi(x, y) y / sum_y pi(x, y)`,
/// defined on atoms that carry mass.
pub fn barycentric_map(pi: &Coupling) -> Vec<Option<[f64; 2]>> {
    let mut acc = vec![[0.0; 3]; pi.source.len()];
    for &(i, j, w) in &pi.entries {
        let y = pi.target[j];
        acc[i][0] += w * y[0];
        acc[i][1] += w * y[1];
        acc[i][2] += w;
    }
    acc.into_iter().map(|[a, b, m]| (m > 0.0).then(|| [a / m, b / m])).collect()
}

/// `sum_x lambda(x) |x - T(x)|^p` for the barycentric map of `pi`.
pub fn map_stagnation_cost(pi: &Coupling, p: f64) -> f64 {
    barycentric_map(pi)
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.map(|t| pi.source_weights[i] * dist(pi.source[i], t).powf(p)))
        .sum()
}

/// `T_# lambda`: atoms landing on the same point are merged.
pub fn pushforward(t: impl Fn([f64; 2]) -> [f64; 2], lam: &DiscreteMeasure) -> DiscreteMeasure {
    let mut slot: HashMap<(u64, u64), usize> = HashMap::new();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for k in lam.support() {
        let y = t(lam.points[k]);
        let key = (y[0].to_bits(), y[1].to_bits());
        let idx = *slot.entry(key).or_insert_with(|| {
            points.push(y);
            weights.push(0.0);
            points.len() - 1
        });
        weights[idx] += lam.weights[k];
    }
    DiscreteMeasure { points, zero: lam.zero, weights }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransportMethod {
    /// Exact up to [`EXACT_LIMIT`] atoms per side, entropic beyond.
    Auto,
    Exact,
    Entropic {
        reg: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlpResult {
    pub distance: f64,
    pub coupling: Coupling,
    /// Set when the entropic fallback produced the value.
    pub approximate: bool,
}

/// TL^p distance with the automatic exact/entropic routing.
pub fn tlp_distance(a: &PairedSample, b: &PairedSample, p: f64) -> Result<TlpResult> {
    tlp_distance_with(a, b, p, TransportMethod::Auto)
}

pub fn tlp_distance_with(a: &PairedSample, b: &PairedSample, p: f64, method: TransportMethod) -> Result<TlpResult> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must lie in [1, inf), got {p}")));
    }
    if a.channels != b.channels {
        return Err(Error::ShapeMismatch {
            expected: format!("{} channels", a.channels),
            found: format!("{} channels", b.channels),
        });
    }
    if a.measure.zero || b.measure.zero {
        return Err(Error::ZeroMeasure);
    }
    let sa = a.measure.support();
    let sb = b.measure.support();
    let wa: Vec<f64> = sa.iter().map(|&k| a.measure.weights[k]).collect();
    let wb: Vec<f64> = sb.iter().map(|&k| b.measure.weights[k]).collect();
    // rows of [x, y, f_1, .., f_m] over the supports
    let pack = |s: &PairedSample, idx: &[usize]| -> Vec<f64> {
        idx.iter().flat_map(|&k| s.measure.points[k].into_iter().chain(s.value(k).iter().copied())).collect()
    };
    let stride = 2 + a.channels;
    let (pa, pb) = (pack(a, &sa), pack(b, &sb));
    let cost = |i: usize, j: usize| {
        let (x, y) = (&pa[i * stride..(i + 1) * stride], &pb[j * stride..(j + 1) * stride]);
        let d2 = (x[0] - y[0]) * (x[0] - y[0]) + (x[1] - y[1]) * (x[1] - y[1]);
        let v2: f64 = x[2..].iter().zip(&y[2..]).map(|(s, t)| (s - t) * (s - t)).sum();
        if p == 2.0 {
            d2 + v2
        } else {
            d2.powf(0.5 * p) + v2.powf(0.5 * p)
        }
    };
    let exact = match method {
        TransportMethod::Exact => true,
        TransportMethod::Entropic { .. } => false,
        TransportMethod::Auto => sa.len() <= EXACT_LIMIT && sb.len() <= EXACT_LIMIT,
    };
    let plan = if exact {
        simplex::solve(&wa, &wb, cost)?
    } else {
        let reg = match method {
            TransportMethod::Entropic { reg } => reg,
            _ => SINKHORN_REG,
        };
        sinkhorn::solve(&wa, &wb, cost, reg)?
    };
    let entries = plan.entries.into_iter().map(|(i, j, w)| (sa[i], sb[j], w)).collect();
    let coupling = Coupling {
        source: a.measure.points.clone(),
        target: b.measure.points.clone(),
        source_weights: a.measure.weights.clone(),
        target_weights: b.measure.weights.clone(),
        entries,
    };
    Ok(TlpResult { distance: plan.cost.max(0.0).powf(1.0 / p), coupling, approximate: !exact })
}

/// Both phase pairs of a state as paired samples on the cell centers.
pub fn phase_samples(s: &SegmentationState) -> Result<(PairedSample, PairedSample)> {
    let m = measures_from(&s.v);
    Ok((PairedSample::from_field(m.lam_v, &s.c1)?, PairedSample::from_field(m.lam_1mv, &s.c2)?))
}

fn phase_distance(a: &PairedSample, b: &PairedSample, p: f64) -> Result<f64> {
    match (a.measure.zero, b.measure.zero) {
        (true, true) => Ok(0.0),
        (false, false) => Ok(tlp_distance(a, b, p)?.distance),
        _ => Err(Error::ZeroMeasure),
    }
}

/// Sum of the TL^p distances of the two phases. A phase whose measure
/// vanishes in both states contributes zero.
pub fn clp_distance(s: &SegmentationState, t: &SegmentationState, p: f64) -> Result<f64> {
    s.v.grid().check_same(t.v.grid())?;
    let (s1, s2) = phase_samples(s)?;
    let (t1, t2) = phase_samples(t)?;
    Ok(phase_distance(&s1, &t1, p)? + phase_distance(&s2, &t2, p)?)
}

fn fields_agree_where(a: &MultiField, b: &MultiField, mask: impl Fn(usize) -> bool) -> bool {
    a.channels() == b.channels()
        && (0..a.grid().len())
            .filter(|&k| mask(k))
            .all(|k| a.cell(k).iter().zip(b.cell(k)).all(|(x, y)| (x - y).abs() <= EQUIV_TOL))
}

/// Equivalence of representatives: both states have the same phase
/// measures and their fields agree almost everywhere for those measures.
pub fn clp_equivalent(s: &SegmentationState, t: &SegmentationState) -> bool {
    if s.v.grid().check_same(t.v.grid()).is_err() {
        return false;
    }
    let (v, w) = (s.v.values(), t.v.values());
    let vanishes = |x: &[f64]| x.iter().all(|a| a.abs() <= EQUIV_TOL);
    let full = |x: &[f64]| x.iter().all(|a| (1.0 - a).abs() <= EQUIV_TOL);
    if vanishes(v) || vanishes(w) {
        return vanishes(v) && vanishes(w) && fields_agree_where(&s.c2, &t.c2, |_| true);
    }
    if full(v) || full(w) {
        return full(v) && full(w) && fields_agree_where(&s.c1, &t.c1, |_| true);
    }
    let ms = measures_from(&s.v);
    let mt = measures_from(&t.v);
    let n = v.len() as f64;
    let same = |a: &DiscreteMeasure, b: &DiscreteMeasure| {
        a.weights.iter().zip(&b.weights).all(|(x, y)| (n * x - n * y).abs() <= EQUIV_TOL)
    };
    same(&ms.lam_v, &mt.lam_v)
        && same(&ms.lam_1mv, &mt.lam_1mv)
        && fields_agree_where(&s.c1, &t.c1, |k| ms.lam_v.weights[k] > 0.0)
        && fields_agree_where(&s.c2, &t.c2, |k| ms.lam_1mv.weights[k] > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, IndicatorField, ScalarField};
    use approx::assert_abs_diff_eq;

    fn sample(points: Vec<[f64; 2]>, values: Vec<f64>) -> PairedSample {
        PairedSample::new(DiscreteMeasure::uniform(points), 1, values).unwrap()
    }

    #[test]
    fn measure_validation() {
        assert!(DiscreteMeasure::new(vec![[0.0; 2]], vec![-1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![[0.0; 2]; 2], vec![0.5, 0.4]).is_err());
        assert!(DiscreteMeasure::new(vec![[0.0; 2]; 2], vec![0.0, 0.0]).unwrap().is_zero());
        assert!(!DiscreteMeasure::new(vec![[0.0; 2]; 2], vec![0.25, 0.75]).unwrap().is_zero());
    }

    #[test]
    fn identical_samples_are_at_distance_zero() {
        let pts = vec![[0.0, 0.0], [0.3, 0.1], [0.9, 0.4]];
        let a = sample(pts, vec![0.1, 0.5, 0.2]);
        let r = tlp_distance(&a, &a, 2.0).unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(stagnation_cost(&r.coupling, 2.0), 0.0);
        assert!(!r.approximate);
    }

    #[test]
    fn single_atoms() {
        let a = sample(vec![[0.0, 0.0]], vec![1.0]);
        let b = sample(vec![[0.3, 0.4]], vec![1.0]);
        assert_abs_diff_eq!(tlp_distance(&a, &b, 2.0).unwrap().distance, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tlp_distance(&a, &b, 3.0).unwrap().distance, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn two_point_swap() {
        let pts = vec![[0.0, 0.0], [0.5, 0.0]];
        let a = sample(pts.clone(), vec![0.0, 1.0]);
        let b = sample(pts, vec![1.0, 0.0]);
        let r = tlp_distance(&a, &b, 1.0).unwrap();
        assert_abs_diff_eq!(r.distance, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(stagnation_cost(&r.coupling, 1.0), 0.5, epsilon = 1e-12);
        assert!(r.coupling.marginal_error() < 1e-15);
    }

    #[test]
    fn zero_measure_is_rejected() {
        let a = PairedSample::new(DiscreteMeasure::zero(vec![[0.0; 2]]), 1, vec![0.0]).unwrap();
        let b = sample(vec![[0.0; 2]], vec![0.0]);
        assert_eq!(tlp_distance(&a, &b, 2.0).unwrap_err(), Error::ZeroMeasure);
    }

    #[test]
    fn pushforward_examples() {
        let lam = DiscreteMeasure::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(pushforward(|x| x, &lam), lam);
        let merged = pushforward(|x| if x[0] < 1.5 { [0.0, 0.0] } else { x }, &lam);
        assert_eq!(merged.points(), &[[0.0, 0.0], [2.0, 0.0]]);
        assert_abs_diff_eq!(merged.weights()[0], 0.5, epsilon = 1e-16);
    }

    #[test]
    fn disjoint_supports_pay_the_gap() {
        let a = sample(vec![[0.0, 0.0], [0.1, 0.0]], vec![0.0, 0.0]);
        let b = sample(vec![[0.6, 0.0], [0.9, 0.3]], vec![0.0, 0.0]);
        let r = tlp_distance(&a, &b, 2.0).unwrap();
        assert!(stagnation_cost(&r.coupling, 2.0) >= 0.5f64.powi(2));
    }

    fn state(v: ScalarField, c1: f64, c2: f64) -> SegmentationState {
        let g = *v.grid();
        SegmentationState::new(v, MultiField::constant(g, &[c1]), MultiField::constant(g, &[c2])).unwrap()
    }

    #[test]
    fn clp_examples() {
        let g = Grid::unit_square(6).unwrap();
        let e = IndicatorField::from_fn(g, |[x, _]| x < 0.5);
        let s = state(e.to_scalar(), 0.2, 0.7);
        assert_eq!(clp_distance(&s, &s, 2.0).unwrap(), 0.0);
        let shifted = state(e.to_scalar(), 0.2, 0.7 + 0.05);
        assert_abs_diff_eq!(clp_distance(&s, &shifted, 2.0).unwrap(), 0.05, epsilon = 1e-12);
        let t = state(ScalarField::from_fn(g, |[x, y]| 0.2 + 0.5 * x * y).unwrap(), 0.1, 0.3);
        assert_abs_diff_eq!(clp_distance(&s, &t, 2.0).unwrap(), clp_distance(&t, &s, 2.0).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn equivalence_examples() {
        let g = Grid::unit_square(6).unwrap();
        let a = state(ScalarField::constant(g, 0.3), 0.4, 0.9);
        let b = state(ScalarField::constant(g, 0.7), 0.4, 0.9);
        assert!(clp_equivalent(&a, &b));
        // weights agree up to rounding, which the p-th root magnifies
        assert!(clp_distance(&a, &b, 2.0).unwrap() < 1e-7);

        let e = IndicatorField::from_fn(g, |[x, _]| x < 0.5);
        let c1 = MultiField::from_fn(g, 1, |[x, _], c| c[0] = if x < 0.5 { 1.0 } else { 5.0 }).unwrap();
        let s = SegmentationState::new(e.to_scalar(), c1, MultiField::constant(g, &[0.0])).unwrap();
        let t = state(e.to_scalar(), 1.0, 0.0);
        assert!(clp_equivalent(&s, &t));

        let f = IndicatorField::from_fn(g, |[x, _]| x < 0.7);
        assert!(!clp_equivalent(&t, &state(f.to_scalar(), 1.0, 0.0)));

        let zero = state(ScalarField::constant(g, 0.0), 3.0, 0.5);
        let zero2 = state(ScalarField::constant(g, 0.0), -1.0, 0.5);
        assert!(clp_equivalent(&zero, &zero2));
        assert_eq!(clp_distance(&zero, &zero2, 2.0).unwrap(), 0.0);
        assert!(!clp_equivalent(&zero, &state(ScalarField::constant(g, 0.0), 3.0, 0.6)));
    }
}
