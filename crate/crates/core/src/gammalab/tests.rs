use super::*;
use approx::assert_relative_eq;

fn quartic() -> DoubleWell {
    DoubleWell::quartic()
}

#[test]
fn plan_validation() {
    let ok = SweepPlan::new(vec![0.1, 0.05, 0.025], MuRule::Fixed(Mu::Finite(1.0)), 0.1, 2.0);
    assert!(ok.is_ok());
    for ladder in [vec![0.1, 0.05], vec![0.1, 0.1, 0.05], vec![0.05, 0.1, 0.2], vec![0.1, 0.05, -0.01]] {
        assert!(SweepPlan::new(ladder, MuRule::Fixed(Mu::Finite(1.0)), 0.1, 2.0).is_err());
    }
    assert!(SweepPlan::new(vec![0.1, 0.05, 0.025], MuRule::Sequence(vec![1.0, 2.0]), 0.1, 2.0).is_err());
    assert!(SweepPlan::new(vec![0.1, 0.05, 0.025], MuRule::Fixed(Mu::Finite(1.0)), -0.1, 2.0).is_err());
    let p = ok.unwrap().with_seeds(vec![]);
    assert!(p.validate().is_err());
}

#[test]
fn mu_rules() {
    assert_eq!(MuRule::Fixed(Mu::Infinite).mu_at(2, 0.1), Mu::Infinite);
    assert_eq!(MuRule::Sequence(vec![1.0, 5.0]).mu_at(1, 0.1), Mu::Finite(5.0));
    let d = MuRule::Divergent { mu0: 2.0, alpha: 1.0 };
    assert!(d.is_divergent());
    assert_relative_eq!(d.mu_at(0, 0.25).value(), 8.0);
}

#[test]
fn single_interface_energy() {
    let rows = modica_mortola_1d(&quartic(), &[0.01], 4096, 1).unwrap();
    assert!((rows[0].gl - 1.0 / 3.0).abs() <= 0.05 / 3.0, "{:?}", rows[0]);
}

#[test]
fn two_interfaces_double_the_energy() {
    let rows = modica_mortola_1d(&quartic(), &[0.02], 2048, 2).unwrap();
    assert!((rows[0].gl - 2.0 / 3.0).abs() <= 0.05 * 2.0 / 3.0, "{:?}", rows[0]);
    assert!((rows[0].ratio - 1.0).abs() <= 0.05);
}

#[test]
fn mm_preconditions() {
    assert!(modica_mortola_1d(&quartic(), &[0.01], 512, 1).is_err());
    assert!(modica_mortola_1d(&quartic(), &[0.0], 2048, 1).is_err());
    assert!(modica_mortola_1d(&quartic(), &[0.01], 2048, 0).is_err());
}

#[test]
fn disc_content() {
    let g = Grid::unit_square(512).unwrap();
    let r = 0.25;
    let e = IndicatorField::from_fn(g, |[x, y]| (x - 0.5).powi(2) + (y - 0.5).powi(2) < r * r);
    let rows = minkowski_study(&e, &[0.1, 0.05, 0.025]).unwrap();
    let exact = 2.0 * std::f64::consts::PI * r;
    for (row, tol) in rows.iter().zip([0.08, 0.05, 0.03]) {
        // annulus of half-width a has area 2a * 2 pi r exactly
        let annulus = std::f64::consts::PI * ((r + row.a).powi(2) - (r - row.a).powi(2));
        assert_relative_eq!(annulus / (2.0 * row.a), exact, max_relative = 1e-12);
        assert!((row.content / exact - 1.0).abs() <= tol, "{row:?}");
    }
}

#[test]
fn half_plane_slab_is_exact() {
    let n = 128;
    let g = Grid::unit_square(n).unwrap();
    let e = IndicatorField::from_fn(g, |[x, _]| x > 0.5);
    let a_ladder: Vec<f64> = [4.0, 10.0, 31.0, 63.0].iter().map(|k| k / n as f64).collect();
    for row in minkowski_study(&e, &a_ladder).unwrap() {
        // discrete slab: cells within a of the interface, a whole number of columns
        let cols = (row.a * n as f64).floor() * 2.0;
        assert_relative_eq!(row.volume, cols / n as f64, max_relative = 1e-12);
        assert_relative_eq!(row.content, row.perimeter, max_relative = 1e-12);
        assert!(row.deviation.abs() <= 1e-12);
    }
}

#[test]
fn minkowski_preconditions() {
    let g = Grid::unit_square(64).unwrap();
    let e = IndicatorField::from_fn(g, |[x, _]| x > 0.5);
    assert!(matches!(minkowski_study(&e, &[0.5 / 64.0]), Err(Error::InvalidParameter(_))));
    let empty = IndicatorField::from_fn(g, |_| false);
    assert!(matches!(minkowski_study(&empty, &[0.1]), Err(Error::DegenerateSet(_))));
}

#[test]
fn synthetic_images_are_seeded() {
    let a = synthetic::half_split(16, 0.25, 0.75, 0.05, 3).unwrap();
    let b = synthetic::half_split(16, 0.25, 0.75, 0.05, 3).unwrap();
    let c = synthetic::half_split(16, 0.25, 0.75, 0.05, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    for (k, x) in a.values().iter().enumerate() {
        let level = if a.grid().center(k)[0] > 0.5 { 0.75 } else { 0.25 };
        assert!((x - level).abs() <= 0.05);
    }
    let t = synthetic::textured(32, 10, 0.0, 1).unwrap();
    assert!(t.values().iter().all(|&x| x == 0.2 || x == 0.8));
}

fn small_plan() -> SweepPlan {
    SweepPlan::new(vec![0.2, 0.1, 0.05], MuRule::Fixed(Mu::Finite(1.0)), 0.1, 2.0).unwrap()
}

#[test]
fn sweep_rows_follow_ladder_and_are_finite() {
    let u0 = synthetic::half_split(16, 0.25, 0.75, 0.0, 0).unwrap();
    let rep = epsilon_sweep(&u0, &quartic(), &small_plan(), &SolverConfig::default()).unwrap();
    assert_eq!(rep.rows.len(), 3);
    assert_eq!(rep.states.len(), 3);
    assert_eq!(rep.masks.len(), 3);
    for (r, eps) in rep.rows.iter().zip([0.2, 0.1, 0.05]) {
        assert_eq!(r.eps, eps);
        let all = [
            r.eps,
            r.mu,
            r.e_at_norm,
            r.e_limit,
            r.gap,
            r.l1_gap,
            r.tv_v,
            r.gl_over_tv,
            r.d_clp,
            r.data1,
            r.data2,
            r.grad1,
            r.grad2,
            r.gl,
        ];
        assert!(all.iter().all(|x| x.is_finite()), "{r:?}");
    }
    assert_eq!(rep.rows[2].d_clp, 0.0);
}

#[test]
fn sweep_is_deterministic() {
    let u0 = synthetic::half_split(16, 0.25, 0.75, 0.05, 1).unwrap();
    let a = epsilon_sweep(&u0, &quartic(), &small_plan(), &SolverConfig::default()).unwrap();
    let b = epsilon_sweep(&u0, &quartic(), &small_plan(), &SolverConfig::default()).unwrap();
    assert_eq!(a, b);
    let cold = small_plan().with_warm_start(false);
    let c = epsilon_sweep(&u0, &quartic(), &cold, &SolverConfig::default()).unwrap();
    let d = epsilon_sweep(&u0, &quartic(), &cold, &SolverConfig::default()).unwrap();
    assert_eq!(c, d);
}

#[test]
fn warm_start_not_worse_than_cold() {
    let u0 = synthetic::half_split(16, 0.25, 0.75, 0.05, 2).unwrap();
    let w = quartic();
    let plan = small_plan();
    let cfg = SolverConfig::default();
    let warm = epsilon_sweep(&u0, &w, &plan, &cfg).unwrap();
    let params = plan.params_at(2, 0.05).unwrap();
    let cold = minimize(&u0, &w, &params, &cfg, None).unwrap();
    let plain = |s: &SegmentationState| at_energy(s, &u0, &w, &params).unwrap().total;
    let (ew, ec) = (plain(&warm.states[2]), plain(&cold.state));
    assert!(ew <= ec * (1.0 + 1e-6), "warm {ew} cold {ec}");
}

#[test]
fn constant_image_gives_constant_phase() {
    let u0 = MultiField::constant(Grid::unit_square(12).unwrap(), &[0.4]);
    let w = quartic();
    let rep = epsilon_sweep(&u0, &w, &small_plan(), &SolverConfig::default()).unwrap();
    for r in &rep.rows {
        assert!(r.e_limit.abs() <= 1e-12, "{r:?}");
        assert!(r.gap.abs() <= 0.1 / w.cw() * r.gl / (0.1 / w.cw()) + 1e-9, "{r:?}");
        assert!(r.tv_v <= 1e-6, "{r:?}");
    }
    let last = rep.states.last().unwrap();
    let (lo, hi) = (last.v.min(), last.v.max());
    assert!(hi - lo <= 1e-6 && (lo.min(1.0 - hi)) <= 1e-6, "v in [{lo}, {hi}]");
}

#[test]
fn errors_carry_the_ladder_point() {
    let u0 = synthetic::half_split(8, 0.25, 0.75, 0.0, 0).unwrap();
    let cfg = SolverConfig { max_outer: 1, cg_max: 1, cg_tol: 1e-300, ..SolverConfig::default() };
    match epsilon_sweep(&u0, &quartic(), &small_plan(), &cfg) {
        Err(Error::AtLadderPoint { eps, .. }) => assert_eq!(eps, 0.2),
        other => panic!("expected a ladder error, got {other:?}"),
    }
}

#[test]
fn pc_constants_match_region_means() {
    let n = 24;
    let sigma = 0.05;
    let u0 = synthetic::half_split(n, 0.2, 0.7, sigma, 11).unwrap();
    let plan = SweepPlan::new(vec![0.2, 0.1, 0.05], MuRule::Fixed(Mu::Infinite), 0.05, 2.0).unwrap();
    let rows = pc_gamma_check(&u0, &quartic(), &plan, &SolverConfig::default()).unwrap();
    let half = (n * n / 2) as f64;
    let last = rows.last().unwrap();
    let tol = 2.0 * sigma / half.sqrt();
    assert!((last.c1_limit[0] - 0.7).abs() <= tol && (last.c2_limit[0] - 0.2).abs() <= tol, "{last:?}");
    for w in rows.windows(2) {
        assert!(w[1].gap.abs() < w[0].gap.abs(), "{} then {}", w[0].gap, w[1].gap);
        assert!(w[1].const_change < w[0].const_change, "{} then {}", w[0].const_change, w[1].const_change);
    }
}

#[test]
fn mu_sweep_validation() {
    let plan = MuPlan { eps: 0.1, mu_ladder: vec![10.0, 1.0], nu: 0.1, p: 2.0 };
    assert!(plan.validate().is_err());
    let plan = MuPlan { eps: 0.1, mu_ladder: vec![], nu: 0.1, p: 2.0 };
    assert!(plan.validate().is_err());
}

#[test]
fn small_mu_tracks_the_image() {
    let u0 = synthetic::shaded_split(24, 0.4, 0.0, 0).unwrap();
    let plan = MuPlan { eps: 0.05, mu_ladder: vec![0.01], nu: 0.05, p: 2.0 };
    let rows = mu_sweep(&u0, &quartic(), &plan, &SolverConfig::default()).unwrap();
    for i in 0..2 {
        let (s, u) = (rows[0].std[i], rows[0].u0_std[i]);
        assert!((s / u - 1.0).abs() <= 0.1, "{:?}", rows[0]);
    }
}
