use super::*;
use statrs::function::erf::erfc;

fn half_ml(x: f64) -> f64 {
    // E_{1/2}(-x) = e^{x²} erfc(x)
    (x * x).exp() * erfc(x)
}

#[test]
fn half_index_matches_erfc() {
    for &x in &[0.1, 1.0, 2.0, 2.9, 3.5, 5.0, 10.0, 25.0] {
        let got = classical_ml(0.5, -x).unwrap();
        let want = half_ml(x);
        assert!(
            (got - want).abs() < 1e-10 * want.max(1e-3),
            "x={x}: {got} vs {want}"
        );
    }
    assert!((classical_ml(0.5, -1.0).unwrap() - 0.427_583_576_155_807).abs() < 1e-12);
    let pos = classical_ml(0.5, 1.5).unwrap();
    let want = (1.5f64 * 1.5).exp() * erfc(-1.5);
    assert!((pos - want).abs() < 1e-12 * want);
}

#[test]
fn unit_index_is_exponential() {
    for &s in &[-30.0, -1.0, 0.3, 5.0] {
        assert!((classical_ml(1.0, s).unwrap() - f64::exp(s)).abs() < 1e-14 * f64::exp(s).max(1.0));
    }
    assert_eq!(classical_ml(0.3, 0.0).unwrap(), 1.0);
}

#[test]
fn integral_and_series_agree_at_the_switch() {
    for &beta in &[0.2, 0.45, 0.7, 0.9] {
        let x = SERIES_REACH.powf(beta);
        let s = series_real(beta, -x);
        let q = negative_integral(beta, x).unwrap();
        assert!((s - q).abs() < 1e-9, "β={beta}: series {s} integral {q}");
    }
}

#[test]
fn domain_and_overflow_errors() {
    assert!(classical_ml(0.0, -1.0).is_err());
    assert!(classical_ml(1.2, -1.0).is_err());
    assert!(classical_ml(0.5, f64::NAN).is_err());
    assert!(matches!(classical_ml(0.5, 40.0), Err(Error::Overflow(_))));
}

#[test]
fn complex_series_on_the_real_axis_and_off_it() {
    let z = classical_ml_complex(1.0, Complex64::new(0.4, 1.1)).unwrap();
    let w = Complex64::new(0.4, 1.1).exp();
    assert!((z - w).norm() < 1e-13);
    let r = classical_ml_complex(0.5, Complex64::new(-1.0, 0.0)).unwrap();
    assert!((r.re - 0.427_583_576_155_807).abs() < 1e-12);
}

#[test]
fn series_reproduces_the_stable_family() {
    let nu = LevyMeasure::stable(0.6, 1.7).unwrap();
    let opts = McOptions::new(1, 0);
    for &(z, l) in &[(0.5, 1.0), (2.0, 0.7), (1.0, -0.5)] {
        let v = gen_ml_scalar(&nu, z, l, MlMethod::Series, &opts).unwrap();
        let want = classical_ml(0.6, -l * f64::powf(z, 0.6) / 1.7).unwrap();
        assert!(
            (v.value - want).abs() < 1e-9,
            "z={z} λ={l}: {} vs {want}",
            v.value
        );
    }
}

#[test]
fn lambda_zero_is_exactly_one() {
    let nu = LevyMeasure::atoms(&[(0.3, 2.0)]).unwrap();
    for m in [
        MlMethod::FirstPassage,
        MlMethod::Series,
        MlMethod::Quadrature,
    ] {
        assert_eq!(
            gen_ml_scalar(&nu, 1.0, 0.0, m, &McOptions::new(10, 1))
                .unwrap()
                .value,
            1.0
        );
    }
}

#[test]
fn series_needs_a_stable_lower_bound() {
    let nu = LevyMeasure::atoms(&[(0.3, 2.0)]).unwrap();
    assert!(matches!(
        gen_ml_scalar(&nu, 1.0, 1.0, MlMethod::Series, &McOptions::new(10, 1)),
        Err(Error::Admissibility(_))
    ));
}

#[test]
fn first_passage_and_quadrature_track_the_closed_form() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let opts = McOptions::new(4000, 11);
    let want = half_ml(1.0);
    let fp = gen_ml_scalar(&nu, 1.0, 1.0, MlMethod::FirstPassage, &opts).unwrap();
    assert!(
        (fp.value - want).abs() < 4.0 * fp.std_error + 2e-3,
        "{} ± {}",
        fp.value,
        fp.std_error
    );
    let q = gen_ml_scalar(&nu, 1.0, 1.0, MlMethod::Quadrature, &opts).unwrap();
    assert!(
        (q.value - want).abs() < 4.0 * q.std_error + 2e-3,
        "{} ± {}",
        q.value,
        q.std_error
    );
}

#[test]
fn poisson_passage_is_gamma_distributed() {
    // one atom at 1 with rate r: τ_z is a sum of ceil(z) exponentials
    let nu = LevyMeasure::atoms(&[(1.0, 2.0)]).unwrap();
    let v = gen_ml_scalar(
        &nu,
        2.5,
        1.0,
        MlMethod::FirstPassage,
        &McOptions::new(6000, 3),
    )
    .unwrap();
    let want = (2.0f64 / 3.0).powi(3);
    assert!(
        (v.value - want).abs() < 4.0 * v.std_error,
        "{} ± {}",
        v.value,
        v.std_error
    );
}

#[test]
fn grid_is_deterministic_and_monotone_in_lambda() {
    let nu = LevyMeasure::stable(0.7, 1.0).unwrap();
    let opts = McOptions::new(300, 5);
    let a = gen_ml_grid(&nu, &[2.0, 0.5], &[0.5, 1.0, 2.0], &opts).unwrap();
    let b = gen_ml_grid(&nu, &[2.0, 0.5], &[0.5, 1.0, 2.0], &opts).unwrap();
    assert_eq!(a, b);
    for row in &a {
        assert!(row[0].value >= row[1].value && row[1].value >= row[2].value);
    }
    assert!(a[1][0].value >= a[0][0].value);
}

#[test]
fn operator_series_on_a_diagonal_generator() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let gen = MatrixGenerator::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        -1.0, -2.0,
    ])))
    .unwrap();
    let v = gen_ml_operator(&nu, 1.0, &gen, MlMethod::Series, &McOptions::new(1, 0)).unwrap();
    assert!((v.value[(0, 0)] - half_ml(1.0)).abs() < 1e-9);
    assert!((v.value[(1, 1)] - half_ml(2.0)).abs() < 1e-9);
    assert!(v.value[(0, 1)].abs() < 1e-15);
    let b = ml_norm_bound(&nu, 1.0, &gen).unwrap();
    assert!(b >= v.value.norm() / 2f64.sqrt() - 1e-12);
    assert!((b - 1.0).abs() < 1e-14);
}

#[test]
fn operator_first_passage_matches_series() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, -1.0]);
    let gen = MatrixGenerator::new(a).unwrap();
    let s = gen_ml_operator(&nu, 1.0, &gen, MlMethod::Series, &McOptions::new(1, 0)).unwrap();
    let f = gen_ml_operator(
        &nu,
        1.0,
        &gen,
        MlMethod::FirstPassage,
        &McOptions::new(3000, 2),
    )
    .unwrap();
    for i in 0..4 {
        assert!(
            (s.value[i] - f.value[i]).abs() < 4.0 * f.std_error[i] + 2e-3,
            "entry {i}: {} vs {}",
            s.value[i],
            f.value[i]
        );
    }
}

#[test]
fn method_names_round_trip() {
    for m in [
        MlMethod::FirstPassage,
        MlMethod::Series,
        MlMethod::Quadrature,
    ] {
        assert_eq!(m.to_string().parse::<MlMethod>().unwrap(), m);
    }
    assert!("taylor".parse::<MlMethod>().is_err());
}
