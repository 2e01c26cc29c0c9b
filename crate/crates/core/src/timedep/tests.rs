#![allow(clippy::needless_range_loop)]

use super::*;
use crate::derivative::residual;
use crate::func::uniform_grid;
use crate::homogeneous::{solve_const, solve_scalar_relaxation};
use crate::mittag_leffler::MatrixGenerator;

fn two_level() -> GeneratorFamily {
    let a1 = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -0.5]);
    let a2 = DMatrix::from_row_slice(2, 2, &[-0.3, 0.0, 1.5, -1.2]);
    GeneratorFamily::piecewise(vec![0.5], vec![a2, a1]).unwrap()
}

/// Right-multiplied RK4 for `dT/ds = T A(Z(s))`, stepped inside each stretch.
fn ode_chron(path: &JumpPath, gen: &GeneratorFamily, steps: usize) -> DMatrix<f64> {
    let d = gen.dim();
    let mut t = DMatrix::<f64>::identity(d, d);
    for seg in path.segments() {
        let a = gen.eval(seg.position);
        let h = seg.duration() / steps as f64;
        for _ in 0..steps {
            let k1 = &t * &a;
            let k2 = (&t + &k1 * (h / 2.0)) * &a;
            let k3 = (&t + &k2 * (h / 2.0)) * &a;
            let k4 = (&t + &k3 * h) * &a;
            t += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    t
}

#[test]
fn no_jumps_is_a_single_exponential() {
    let gen = GeneratorFamily::rotation_decay(1.3, -1.0, -2.0).unwrap();
    let p = JumpPath::constant(0.8, 1.7);
    let got = chron_exp(&p, &gen, 0.0, 1.7).unwrap();
    assert!((got - expm(&(gen.eval(0.8) * 1.7))).amax() < 1e-13);
    let acc = ChronExpAccumulator::new(2, 0.8);
    assert_eq!(acc.product(), &DMatrix::<f64>::identity(2, 2));
    assert_eq!(acc.time(), 0.0);
}

#[test]
fn commuting_family_is_the_exponential_of_the_integral() {
    let gen = GeneratorFamily::custom(2, -5.0, 5.0, |x| {
        DMatrix::from_diagonal(&DVector::from_vec(vec![-x.abs(), x.sin() - 1.0]))
    })
    .unwrap();
    let p = JumpPath::new(1.0, 2.0, vec![0.3, 1.1, 1.5], vec![0.4, 0.25, 1.0]).unwrap();
    let c = chron_exp(&p, &gen, 0.0, 2.0).unwrap();
    let e = exp_of_integral(&p, &gen, 0.0, 2.0).unwrap();
    assert!((&c - &e).amax() < 1e-14);
    let want0: f64 = p.segments().map(|s| -s.position.abs() * s.duration()).sum();
    assert!((c[(0, 0)] - want0.exp()).abs() < 1e-14);
    assert_eq!(c[(0, 1)], 0.0);
}

#[test]
fn ordering_matches_the_backward_ode() {
    let gen = two_level();
    let p = JumpPath::new(0.9, 2.0, vec![0.7], vec![0.6]).unwrap();
    let c = chron_exp(&p, &gen, 0.0, 2.0).unwrap();
    let ode = ode_chron(&p, &gen, 10_000);
    assert!((&c - &ode).amax() < 1e-6, "{c} vs {ode}");
    let e = exp_of_integral(&p, &gen, 0.0, 2.0).unwrap();
    assert!(
        (&c - &e).amax() > 1e-3,
        "the family should not commute here"
    );
    // the wrong order is far from the ODE too
    let rev = expm(&(gen.eval(0.3) * 1.3)) * expm(&(gen.eval(0.9) * 0.7));
    assert!((&rev - &ode).amax() > 1e-3);
}

#[test]
fn splitting_time_multiplies_the_factors() {
    let gen = GeneratorFamily::rotation_decay(2.0, -1.0, -2.0).unwrap();
    let p = JumpPath::new(1.0, 3.0, vec![0.5, 1.2, 2.5], vec![0.1, 0.3, 0.2]).unwrap();
    for &t1 in &[0.5, 0.9, 1.2, 2.0] {
        let whole = chron_exp(&p, &gen, 0.2, 2.8).unwrap();
        let split = chron_exp(&p, &gen, 0.2, t1).unwrap() * chron_exp(&p, &gen, t1, 2.8).unwrap();
        assert!((whole - split).amax() < 1e-13);
    }
    assert!(chron_exp(&p, &gen, 1.0, 0.5).is_err());
    assert!(chron_exp(&p, &gen, 0.0, 3.5).is_err());
}

fn smooth_step(grid_lo: f64) -> GriddedFunction {
    GriddedFunction::from_scalar_fn(uniform_grid(grid_lo, 4.0, 561), |x| {
        1.0 / (1.0 + (-3.0 * x).exp())
    })
    .unwrap()
}

#[test]
fn zero_generator_gives_the_poisson_mixture() {
    let nu = LevyMeasure::atoms(&[(1.0, 1.0)]).unwrap();
    let gen = GeneratorFamily::diagonal(&[0.0]).unwrap();
    let y = smooth_step(-10.0);
    let (t, x) = (1.5, 1.2);
    let est = semigroup_apply(&nu, &gen, &y, t, x, &McOptions::new(20_000, 5)).unwrap();
    let mut want = 0.0;
    let mut w = (-t).exp();
    for k in 0..40 {
        want += w * y.eval1(x - k as f64);
        w *= t / (k + 1) as f64;
    }
    assert!(
        (est.value[0] - want).abs() < 3.0 * est.std_error[0],
        "{:?} vs {want}",
        est
    );
}

#[test]
fn empty_measure_is_the_pointwise_semigroup() {
    let gen = GeneratorFamily::rotation_decay(1.0, -1.0, -0.5).unwrap();
    let y = GriddedFunction::from_fn(uniform_grid(-1.0, 1.0, 11), |x| {
        DVector::from_vec(vec![1.0 + x, 2.0])
    })
    .unwrap();
    let est = semigroup_apply(
        &LevyMeasure::zero(),
        &gen,
        &y,
        0.7,
        0.3,
        &McOptions::new(10, 1),
    )
    .unwrap();
    let want = expm(&(gen.eval(0.3) * 0.7)) * y.eval(0.3);
    assert!((DVector::from_vec(est.value) - want).amax() < 1e-14);
}

#[test]
fn semigroup_respects_its_growth_bound() {
    let nu = LevyMeasure::atoms(&[(0.3, 1.0), (0.7, 0.5)]).unwrap();
    let gen = GeneratorFamily::rotation_decay(3.0, -0.2, 0.4).unwrap();
    let y = GriddedFunction::from_fn(uniform_grid(-6.0, 2.0, 81), |x| {
        DVector::from_vec(vec![x.cos(), 1.0])
    })
    .unwrap();
    let y_norm = 2f64.sqrt();
    for &t in &[0.5, 1.0, 2.0] {
        let est = semigroup_apply(&nu, &gen, &y, t, 1.0, &McOptions::new(2000, 9)).unwrap();
        let norm = est.value.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = semigroup_norm_bound(&nu, &gen, t) * y_norm;
        assert!(
            norm <= bound + 3.0 * est.max_std_error(),
            "t={t}: {norm} > {bound}"
        );
    }
}

#[test]
fn series_of_order_zero_is_the_no_jump_term() {
    let nu = LevyMeasure::atoms(&[(0.5, 0.8)]).unwrap();
    let gen = GeneratorFamily::rotation_decay(1.0, -1.0, -2.0).unwrap();
    let y = GriddedFunction::from_fn(uniform_grid(-3.0, 2.0, 21), |x| {
        DVector::from_vec(vec![x, 1.0])
    })
    .unwrap();
    let s = perturbation_series(&nu, &gen, &y, 1.0, 0.6, 0, f64::INFINITY).unwrap();
    assert_eq!(s.order, 0);
    let want = expm(&gen.eval(0.6)) * y.eval(0.6) * (-0.8f64).exp();
    assert!((DVector::from_vec(s.value) - want).amax() < 1e-13);
}

#[test]
fn scalar_series_resums_to_the_mixture() {
    let (w, lam, t, x) = (1.3, 0.7, 1.2, 0.4);
    let nu = LevyMeasure::atoms(&[(0.5, w)]).unwrap();
    let gen = GeneratorFamily::diagonal(&[-lam]).unwrap();
    let y = smooth_step(-12.0);
    let s = perturbation_series(&nu, &gen, &y, t, x, 40, 1e-12).unwrap();
    let mut want = 0.0;
    let mut p = (-w * t).exp();
    for k in 0..60 {
        want += p * y.eval1(x - 0.5 * k as f64);
        p *= w * t / (k + 1) as f64;
    }
    want *= (-lam * t).exp();
    assert!(
        (s.value[0] - want).abs() <= s.tail_bound + 1e-12,
        "{} vs {want} (tail {})",
        s.value[0],
        s.tail_bound
    );
}

#[test]
fn series_needs_enough_terms() {
    let nu = LevyMeasure::atoms(&[(0.5, 2.0)]).unwrap();
    let gen = GeneratorFamily::diagonal(&[-1.0]).unwrap();
    let y = smooth_step(-12.0);
    match perturbation_series(&nu, &gen, &y, 1.0, 0.0, 3, 1e-10) {
        Err(Error::TailBound { required, .. }) => assert!(required > 3),
        other => panic!("expected a tail-bound error, got {other:?}"),
    }
    let stable = LevyMeasure::stable(0.5, 1.0).unwrap();
    assert!(perturbation_series(&stable, &gen, &y, 1.0, 0.0, 3, 1e-3).is_err());
}

#[test]
fn series_agrees_with_monte_carlo() {
    let nu = LevyMeasure::atoms(&[(0.3, 0.6), (0.8, 0.4)]).unwrap();
    let gen = GeneratorFamily::rotation_decay(2.5, -0.5, -1.5).unwrap();
    let y = GriddedFunction::from_fn(uniform_grid(-8.0, 2.0, 201), |x| {
        DVector::from_vec(vec![(2.0 * x).cos(), 1.0 / (1.0 + x * x)])
    })
    .unwrap();
    let (t, x) = (1.5, 1.0);
    let s = perturbation_series(&nu, &gen, &y, t, x, 40, 1e-10).unwrap();
    let mc = semigroup_apply(&nu, &gen, &y, t, x, &McOptions::new(20_000, 17)).unwrap();
    for k in 0..2 {
        assert!(
            (s.value[k] - mc.value[k]).abs() < 3.0 * mc.std_error[k] + s.tail_bound,
            "{k}: {s:?} vs {mc:?}"
        );
    }
}

#[test]
fn resolvent_of_zero_is_zero() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let gen = GeneratorFamily::rotation_decay(1.0, -1.0, -2.0).unwrap();
    let g = GriddedFunction::from_fn(uniform_grid(0.0, 1.0, 5), |_| DVector::zeros(2)).unwrap();
    let r = resolvent(&nu, &gen, 0.5, &g, 0.0, 1.0, &McOptions::new(100, 1)).unwrap();
    assert!(r.value.iter().all(|v| *v == 0.0));
}

#[test]
fn resolvent_of_one_for_the_poisson_subordinator() {
    let nu = LevyMeasure::atoms(&[(1.0, 1.0)]).unwrap();
    let gen = GeneratorFamily::diagonal(&[0.0]).unwrap();
    let g = GriddedFunction::from_scalar_fn(uniform_grid(0.0, 1.0, 3), |_| 1.0).unwrap();
    let r = resolvent(&nu, &gen, 1.0, &g, 0.0, 0.5, &McOptions::new(4000, 2)).unwrap();
    assert!((r.value[0] - 0.5).abs() < 1e-15);
    let c = resolvent_curve_with(
        &nu,
        &gen,
        1.0,
        &g,
        0.0,
        &[0.0, 0.5],
        &McOptions::new(4000, 2),
        PathEstimator::Pathwise,
    )
    .unwrap();
    let (v, s) = (c.values[1][0], c.std_errors[1][0]);
    assert!((v - 0.5).abs() < 3.0 * s, "{v} ± {s}");
}

#[test]
fn resolvent_rejects_small_lambda() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let gen = GeneratorFamily::diagonal(&[1.0])
        .unwrap()
        .with_growth(1.0, 1.0)
        .unwrap();
    let g = GriddedFunction::from_scalar_fn(uniform_grid(0.0, 1.0, 3), |_| 1.0).unwrap();
    let err = resolvent(&nu, &gen, 0.5, &g, 0.0, 1.0, &McOptions::new(10, 1)).unwrap_err();
    assert!(matches!(err, Error::Admissibility(_)), "{err}");
    assert!(resolvent(&nu, &gen, 1.5, &g, 0.0, 1.0, &McOptions::new(10, 1)).is_ok());
}

#[test]
fn resolvent_satisfies_its_equation() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let lam = 0.8;
    let gen = GeneratorFamily::rotation_decay(1.5, -1.0, -2.0).unwrap();
    let grid = uniform_grid(0.0, 1.0, 129);
    let g = GriddedFunction::from_fn(grid.clone(), |x| DVector::from_vec(vec![x.sin(), x * x]))
        .unwrap();
    let c = resolvent_curve(&nu, &gen, lam, &g, 0.0, &grid, &McOptions::new(4000, 21)).unwrap();
    let shifted = GeneratorFamily::custom(2, -1.0, 2.0, move |x| {
        GeneratorFamily::rotation_decay(1.5, -1.0, -2.0)
            .unwrap()
            .eval(x)
            - DMatrix::<f64>::identity(2, 2) * lam
    })
    .unwrap();
    let rep = residual(&c, &nu, &shifted, Some(&g)).unwrap();
    let allow = 5e-3 + 5.0 * c.max_std_error();
    assert!(
        rep.max_residual <= allow,
        "{} at {} > {allow}",
        rep.max_residual,
        rep.at_x
    );
}

#[test]
fn diagonal_family_matches_scalar_relaxation() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let gen = GeneratorFamily::diagonal(&[-1.0, -2.5]).unwrap();
    let grid = uniform_grid(0.0, 1.5, 17);
    let opts = McOptions::new(4000, 6);
    let c = solve_boundary(
        &nu,
        &gen,
        &DVector::from_vec(vec![1.0, 1.0]),
        None,
        0.0,
        &grid,
        &opts,
    )
    .unwrap();
    for (k, lam) in [(0, 1.0), (1, 2.5)] {
        let s = solve_scalar_relaxation(&nu, lam, 1.0, &grid, &McOptions::new(4000, 60 + k as u64))
            .unwrap();
        for i in 1..grid.len() {
            let tol = 3.0 * (c.std_errors[i][k].powi(2) + s.std_errors[i][0].powi(2)).sqrt() + 2e-3;
            assert!(
                (c.values[i][k] - s.values[i][0]).abs() < tol,
                "λ={lam} x={}",
                grid[i]
            );
        }
    }
}

#[test]
fn zero_data_stays_zero() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let gen = GeneratorFamily::rotation_decay(1.0, -1.0, -2.0).unwrap();
    let c = solve_boundary(
        &nu,
        &gen,
        &DVector::zeros(2),
        None,
        0.0,
        &uniform_grid(0.0, 1.0, 9),
        &McOptions::new(50, 1),
    )
    .unwrap();
    assert!(c.values.iter().all(|v| v.iter().all(|x| *x == 0.0)));
}

#[test]
fn constant_family_matches_the_homogeneous_solver() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.6, -0.6, -1.5]);
    let grid = uniform_grid(0.0, 1.0, 33);
    let y = DVector::from_vec(vec![1.0, -0.5]);
    let g =
        GriddedFunction::from_fn(grid.clone(), |x| DVector::from_vec(vec![x, 1.0 - x])).unwrap();
    let opts = McOptions::new(4000, 12);
    let tb = solve_boundary(
        &nu,
        &GeneratorFamily::constant(a.clone()).unwrap(),
        &y,
        Some(&g),
        0.0,
        &grid,
        &opts,
    )
    .unwrap();
    let hc = solve_const(
        &nu,
        &MatrixGenerator::new(a).unwrap(),
        &y,
        Some(&g),
        &grid,
        &opts,
    )
    .unwrap();
    for i in 1..grid.len() {
        for k in 0..2 {
            let tol =
                3.0 * (tb.std_errors[i][k].powi(2) + hc.std_errors[i][k].powi(2)).sqrt() + 1e-3;
            assert!(
                (tb.values[i][k] - hc.values[i][k]).abs() < tol,
                "x={} k={k}",
                grid[i]
            );
        }
    }
}

#[test]
fn rotation_family_passes_the_residual_check() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let gen = GeneratorFamily::rotation_decay(2.0, -1.0, -2.0).unwrap();
    let grid = uniform_grid(0.0, 1.0, 65);
    let y = DVector::from_vec(vec![1.0, 0.5]);
    let c = solve_boundary(&nu, &gen, &y, None, 0.0, &grid, &McOptions::new(8000, 31)).unwrap();
    assert!(!c.meta.out_of_theorem);
    let rep = residual(&c, &nu, &gen, None).unwrap();
    let allow = 5e-3 + 5.0 * c.max_std_error();
    assert!(
        rep.max_residual <= allow,
        "{} at {} > {allow}",
        rep.max_residual,
        rep.at_x
    );
}

#[test]
fn finite_measure_estimators_agree_and_jump_at_a() {
    let nu = LevyMeasure::atoms(&[(0.25, 1.0), (0.6, 0.5)]).unwrap();
    let gen = two_level();
    let y = DVector::from_vec(vec![1.0, 1.0]);
    let grid = uniform_grid(0.0, 1.5, 7);
    let opts = McOptions::new(6000, 4);
    let c = solve_boundary_with(
        &nu,
        &gen,
        &y,
        None,
        0.0,
        &grid,
        &opts,
        PathEstimator::Conditional,
    )
    .unwrap();
    let p = solve_boundary_with(
        &nu,
        &gen,
        &y,
        None,
        0.0,
        &grid,
        &opts,
        PathEstimator::Pathwise,
    )
    .unwrap();
    for i in 1..grid.len() {
        for k in 0..2 {
            let tol = 3.0 * (c.std_errors[i][k].powi(2) + p.std_errors[i][k].powi(2)).sqrt();
            assert!(
                (c.values[i][k] - p.values[i][k]).abs() < tol,
                "x={} k={k}",
                grid[i]
            );
        }
    }
    let r = c.right_limit.as_ref().expect("finite ν jumps at a");
    let m = 1.5;
    let want = (DMatrix::<f64>::identity(2, 2) * m - gen.eval(0.0))
        .lu()
        .solve(&(&y * m))
        .unwrap();
    assert!((r - want).amax() < 1e-14);
}

#[test]
fn boundary_argument_checks() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let gen = GeneratorFamily::diagonal(&[-1.0]).unwrap();
    let y = DVector::from_element(1, 1.0);
    let opts = McOptions::new(10, 1);
    assert!(solve_boundary(&nu, &gen, &y, None, 0.5, &[0.25, 1.0], &opts).is_err());
    assert!(solve_boundary(&nu, &gen, &DVector::zeros(2), None, 0.0, &[0.0, 1.0], &opts).is_err());
    let c = solve_boundary(&nu, &gen, &y, None, 0.0, &[0.5, 1.0], &opts).unwrap();
    assert_eq!(c.grid, vec![0.0, 0.5, 1.0]);
    assert_eq!(c.values[0][0], 1.0);
}

#[test]
fn non_contraction_is_flagged() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let gen = GeneratorFamily::diagonal(&[0.3]).unwrap();
    let c = solve_boundary(
        &nu,
        &gen,
        &DVector::from_element(1, 1.0),
        None,
        0.0,
        &uniform_grid(0.0, 1.0, 5),
        &McOptions::new(200, 1),
    )
    .unwrap();
    assert!(c.meta.out_of_theorem);
}

#[test]
fn cutoff_ladder_differences_shrink() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let gen = GeneratorFamily::rotation_decay(1.0, -1.0, -2.0).unwrap();
    let y = DVector::from_vec(vec![1.0, 0.0]);
    let grid = uniform_grid(0.0, 1.0, 17);
    let lad = solve_boundary_ladder(
        &nu,
        &gen,
        &y,
        None,
        0.0,
        &grid,
        &[1e-2, 5e-3, 2.5e-3],
        &McOptions::new(4000, 3),
        PathEstimator::Conditional,
    )
    .unwrap();
    assert_eq!(lad.eps, vec![1e-2, 5e-3, 2.5e-3]);
    assert_eq!(lad.differences.len(), 2);
    let size = |c: &SolutionCurve| c.values.iter().map(|v| v.amax()).fold(0.0, f64::max);
    let (d0, d1) = (size(&lad.differences[0]), size(&lad.differences[1]));
    assert!(d0 > 0.0 && d1 < d0, "{d0} {d1}");
    // coupling makes the difference far more precise than either curve
    assert!(lad.differences[0].max_std_error() < 0.5 * lad.curves[0].max_std_error());
}
