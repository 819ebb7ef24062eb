//! Double-well potentials `W` with wells at 0 and 1 and the well constant
//! `c_W = 2 * int_0^1 sqrt(W(t)) dt`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tolerance used for the cached well constant.
pub const CW_TOL: f64 = 1e-12;

#[derive(Clone)]
pub struct DoubleWell {
    name: String,
    eval: RealFn,
    deriv: RealFn,
    /// Linear-growth certificate `(L, T)`: `W(t) >= L|t|` for `|t| >= T`.
    growth: (f64, f64),
    cw: f64,
}

impl fmt::Debug for DoubleWell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DoubleWell")
            .field("name", &self.name)
            .field("growth", &self.growth)
            .field("cw", &self.cw)
            .finish()
    }
}

impl DoubleWell {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        growth: (f64, f64),
    ) -> Result<Self> {
        let (l, t) = growth;
        if !(l > 0.0 && t > 0.0) {
            return Err(Error::InvalidParameter(format!("growth certificate must be positive, got ({l}, {t})")));
        }
        let eval: RealFn = Arc::new(eval);
        let cw = adaptive_cw(&*eval, CW_TOL)?;
        if !(cw > 0.0) {
            return Err(Error::AssumptionViolation { t: 0.5, reason: "c_W must be positive".into() });
        }
        Ok(DoubleWell { name: name.into(), eval, deriv: Arc::new(deriv), growth, cw })
    }

    /// `W(t) = t^2 (t - 1)^2`.
    pub fn quartic() -> Self {
        Self::new("quartic", |t| t * t * (t - 1.0) * (t - 1.0), |t| 2.0 * t * (t - 1.0) * (2.0 * t - 1.0), (1.0, 2.0))
            .expect("quartic well is valid")
    }

    /// `W(t) = sin^2(pi t) / 4` on `[0, 1]`, continued by the matching
    /// quadratics `(pi^2/4) t^2` and `(pi^2/4)(t-1)^2` outside.
    pub fn sine() -> Self {
        use std::f64::consts::PI;
        let k = 0.25 * PI * PI;
        Self::new(
            "sine",
            move |t| {
                if t < 0.0 {
                    k * t * t
                } else if t > 1.0 {
                    k * (t - 1.0) * (t - 1.0)
                } else {
                    0.25 * (PI * t).sin().powi(2)
                }
            },
            move |t| {
                if t < 0.0 {
                    2.0 * k * t
                } else if t > 1.0 {
                    2.0 * k * (t - 1.0)
                } else {
                    0.25 * PI * (2.0 * PI * t).sin()
                }
            },
            (1.0, 2.0),
        )
        .expect("sine well is valid")
    }

    /// Built-in wells by name: `"quartic"` or `"sine"`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "quartic" => Ok(Self::quartic()),
            "sine" => Ok(Self::sine()),
            other => Err(Error::InvalidParameter(format!("unknown potential '{other}' (expected quartic or sine)"))),
        }
    }

    /// `factor * W`, keeping the growth threshold and scaling `L`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let e = self.eval.clone();
        let d = self.deriv.clone();
        Self::new(
            format!("{}*{factor}", self.name),
            move |t| factor * e(t),
            move |t| factor * d(t),
            (self.growth.0 * factor, self.growth.1),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        (self.deriv)(t)
    }

    pub fn growth(&self) -> (f64, f64) {
        self.growth
    }

    pub fn cw(&self) -> f64 {
        self.cw
    }
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureNonConvergence { a, b });
    }
    Ok(adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

const MAX_DEPTH: u32 = 48;

fn adaptive_cw(w: &dyn Fn(f64) -> f64, tol: f64) -> Result<f64> {
    let root = |t: f64| w(t).max(0.0).sqrt();
    // sqrt(W) has cusps at the wells; they are the interval ends, and the
    // midpoint split keeps the two halves symmetric for symmetric wells.
    let mut total = 0.0;
    for (a, b) in [(0.0, 0.5), (0.5, 1.0)] {
        let (fa, fm, fb) = (root(a), root(0.5 * (a + b)), root(b));
        let whole = simpson(fa, fm, fb, a, b);
        // c_W = 2 * integral, so each half gets a quarter of the budget
        total += adaptive_simpson(&root, a, b, fa, fm, fb, whole, 0.25 * tol, MAX_DEPTH)?;
    }
    Ok(2.0 * total)
}

/// `c_W = 2 int_0^1 sqrt(W)` by adaptive Simpson with absolute error `tol`.
pub fn compute_cw(w: &DoubleWell, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    adaptive_cw(&*w.eval, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub samples: usize,
    pub range: (f64, f64),
    pub min_growth_margin: f64,
}

/// Checks the double-well assumption by sampling `[-2T, 2T]`: `W >= 0`,
/// `W(0) = W(1) = 0`, no other zeros, and `W(t) >= L|t|` for `|t| >= T`.
/// Returns the first violation as an error.
pub fn validate_assumption(w: &DoubleWell, samples: usize) -> Result<AssumptionReport> {
    if samples < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 samples, got {samples}")));
    }
    const ZERO: f64 = 1e-12;
    for well in [0.0, 1.0] {
        let value = w.eval(well);
        if !(value.abs() <= ZERO) {
            return Err(Error::AssumptionViolation { t: well, reason: format!("W({well}) = {value} is not a well") });
        }
    }
    let (l, t_growth) = w.growth;
    let (lo, hi) = (-2.0 * t_growth, 2.0 * t_growth);
    let step = (hi - lo) / (samples - 1) as f64;
    let mut margin = f64::INFINITY;
    for s in 0..samples {
        let t = lo + step * s as f64;
        let value = w.eval(t);
        if !value.is_finite() || value < 0.0 {
            return Err(Error::AssumptionViolation { t, reason: format!("W(t) = {value} is negative or not finite") });
        }
        let near_well = t.abs() < step || (t - 1.0).abs() < step;
        if !near_well && value <= ZERO {
            return Err(Error::AssumptionViolation { t, reason: "zero away from the wells".into() });
        }
        if t.abs() >= t_growth {
            let m = value - l * t.abs();
            margin = margin.min(m);
            if m < 0.0 {
                return Err(Error::AssumptionViolation {
                    t,
                    reason: format!("W(t) = {value} < L|t| = {}", l * t.abs()),
                });
            }
        }
    }
    Ok(AssumptionReport { samples, range: (lo, hi), min_growth_margin: margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    /// Composite trapezoid on `n` panels; independent of the adaptive path.
    fn trapezoid_cw(w: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let f = |t: f64| w(t).max(0.0).sqrt();
        let interior: f64 = (1..n).map(|k| f(k as f64 * h)).sum();
        2.0 * h * (0.5 * (f(0.0) + f(1.0)) + interior)
    }

    #[test]
    fn quartic_values() {
        let w = DoubleWell::quartic();
        assert_eq!(w.eval(0.0), 0.0);
        assert_eq!(w.eval(1.0), 0.0);
        assert_eq!(w.eval(0.5), 1.0 / 16.0);
        assert_eq!(w.deriv(0.5), 0.0);
    }

    #[test]
    fn cw_of_builtin_wells() {
        let q = DoubleWell::quartic();
        let trap = trapezoid_cw(|t| q.eval(t), 200_000);
        assert_abs_diff_eq!(trap, 1.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(compute_cw(&q, 1e-10).unwrap(), trap, epsilon = 1e-8);

        let s = DoubleWell::sine();
        let trap = trapezoid_cw(|t| s.eval(t), 200_000);
        assert_abs_diff_eq!(trap, 2.0 / PI, epsilon = 1e-9);
        assert_abs_diff_eq!(compute_cw(&s, 1e-10).unwrap(), trap, epsilon = 1e-8);
        assert_abs_diff_eq!(s.cw(), 2.0 / PI, epsilon = 1e-10);
    }

    #[test]
    fn cw_scaling() {
        let tol = 1e-10;
        for w in [DoubleWell::quartic(), DoubleWell::sine()] {
            let base = compute_cw(&w, tol).unwrap();
            assert_abs_diff_eq!(compute_cw(&w.scaled(4.0).unwrap(), tol).unwrap(), 2.0 * base, epsilon = 2.0 * tol);
            for alpha in [0.3_f64, 1.7, 5.0] {
                let scaled = w.scaled(alpha * alpha).unwrap();
                assert_abs_diff_eq!(compute_cw(&scaled, tol).unwrap(), alpha * base, epsilon = 2.0 * tol);
            }
        }
    }

    #[test]
    fn cw_is_monotone_in_w() {
        // quartic <= sine-type well on [0,1]? compare the quartic with 2x itself
        let tol = 1e-10;
        let q = DoubleWell::quartic();
        let bigger =
            DoubleWell::new("q+", |t| t * t * (t - 1.0) * (t - 1.0) * (1.0 + t * t), |_| 0.0, (1.0, 2.0)).unwrap();
        assert!(compute_cw(&q, tol).unwrap() <= compute_cw(&bigger, tol).unwrap() + 2.0 * tol);
    }

    #[test]
    fn cw_rejects_bad_tolerance() {
        assert!(compute_cw(&DoubleWell::quartic(), 0.0).is_err());
    }

    #[test]
    fn derivative_matches_central_differences() {
        let h = 1e-4;
        for w in [DoubleWell::quartic(), DoubleWell::sine()] {
            let mut worst: f64 = 0.0;
            for k in 0..=300 {
                let t = -1.0 + 3.0 * k as f64 / 300.0;
                let fd = (w.eval(t + h) - w.eval(t - h)) / (2.0 * h);
                worst = worst.max((fd - w.deriv(t)).abs());
            }
            assert!(worst <= 1e-6, "{}: {worst}", w.name());
        }
    }

    #[test]
    fn assumption_holds_for_builtins() {
        let rep = validate_assumption(&DoubleWell::quartic(), 2001).unwrap();
        assert!(rep.min_growth_margin >= 0.0);
        validate_assumption(&DoubleWell::sine(), 2001).unwrap();
    }

    #[test]
    fn assumption_catches_decaying_well() {
        let w = DoubleWell::new("decaying", |t| t * t * (t - 1.0) * (t - 1.0) * (-t * t).exp(), |_| 0.0, (1.0, 2.0))
            .unwrap();
        match validate_assumption(&w, 1000) {
            Err(Error::AssumptionViolation { t, .. }) => assert!(t.abs() >= 2.0),
            other => panic!("expected violation, got {other:?}"),
        }
        let w = DoubleWell::new("decaying", |t| t * t * (t - 1.0) * (t - 1.0) * (-t * t).exp(), |_| 0.0, (0.01, 10.0))
            .unwrap();
        assert!(validate_assumption(&w, 1000).is_err());
    }

    #[test]
    fn assumption_catches_missing_well() {
        let w = DoubleWell::new("single", |t| (t - 1.0) * (t - 1.0), |t| 2.0 * (t - 1.0), (1.0, 3.0)).unwrap();
        match validate_assumption(&w, 500) {
            Err(Error::AssumptionViolation { t, .. }) => assert_eq!(t, 0.0),
            other => panic!("expected violation at 0, got {other:?}"),
        }
    }

    #[test]
    fn names_resolve() {
        assert_eq!(DoubleWell::by_name("sine").unwrap().name(), "sine");
        assert!(DoubleWell::by_name("cubic").is_err());
    }
}
