#![allow(clippy::needless_range_loop)]

use super::*;
use crate::func::uniform_grid;

fn opts(n: usize, seed: u64) -> McOptions {
    McOptions::new(n, seed)
}

#[test]
fn stable_closed_form_at_one() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let e = potential_mass(&nu, 0.0, 1.0, PotentialMethod::ClosedForm, &opts(1, 0)).unwrap();
    assert!((e.value - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-14);
    // resolvent mass for λ > 0 with the erfc form of E_{1/2}
    let l = 2.0;
    let e = potential_mass(&nu, l, 1.0, PotentialMethod::ClosedForm, &opts(1, 0)).unwrap();
    let ml = (l * l).exp() * statrs::function::erf::erfc(l);
    assert!((e.value - (1.0 - ml) / l).abs() < 1e-10);
}

#[test]
fn lattice_atom_counts_levels() {
    let nu = LevyMeasure::atoms(&[(1.0, 1.0)]).unwrap();
    let e = potential_mass(&nu, 0.0, 2.5, PotentialMethod::Series, &opts(1, 0)).unwrap();
    assert!((e.value - 3.0).abs() < 1e-14);
    // the closed level z = 2 is counted: S sits at 2 before leaving
    let e = potential_mass(&nu, 0.0, 2.0, PotentialMethod::Series, &opts(1, 0)).unwrap();
    assert!((e.value - 3.0).abs() < 1e-14);
    let mc = potential_mass(&nu, 0.0, 2.0, PotentialMethod::MonteCarlo, &opts(4000, 9)).unwrap();
    assert!(
        (mc.value - 3.0).abs() < 4.0 * mc.std_error,
        "{} ± {}",
        mc.value,
        mc.std_error
    );
}

#[test]
fn below_the_smallest_atom_only_the_holding_time_counts() {
    let nu = LevyMeasure::atoms(&[(1.0, 2.0), (1.5, 0.5)]).unwrap();
    let e = potential_mass(&nu, 0.0, 0.5, PotentialMethod::Series, &opts(1, 0)).unwrap();
    assert!((e.value - 0.4).abs() < 1e-15);
    let e = potential_mass(&nu, 1.5, 0.5, PotentialMethod::Series, &opts(1, 0)).unwrap();
    assert!((e.value - 0.25).abs() < 1e-15);
}

#[test]
fn monte_carlo_agrees_with_the_atom_series() {
    let nu = LevyMeasure::atoms(&[(0.4, 1.0), (0.7, 0.5)]).unwrap();
    let g = potential_mass_grid(&nu, &[0.0, 1.0], &[1.0, 2.0], &opts(3000, 4)).unwrap();
    for row in &g {
        for e in row {
            let s =
                potential_mass(&nu, e.lambda, e.z, PotentialMethod::Series, &opts(1, 0)).unwrap();
            assert!(
                (e.value - s.value).abs() < 4.0 * e.std_error + 1e-12,
                "λ={} z={}: {} vs {}",
                e.lambda,
                e.z,
                e.value,
                s.value
            );
        }
    }
}

#[test]
fn monte_carlo_stable_resolvent_mass() {
    let nu = LevyMeasure::stable(0.6, 1.0).unwrap();
    let exact = potential_mass(&nu, 1.0, 1.0, PotentialMethod::ClosedForm, &opts(1, 0))
        .unwrap()
        .value;
    let mc = potential_mass(&nu, 1.0, 1.0, PotentialMethod::MonteCarlo, &opts(3000, 1)).unwrap();
    assert!(
        (mc.value - exact).abs() < 4.0 * mc.std_error + 3e-3,
        "{} ± {} vs {exact}",
        mc.value,
        mc.std_error
    );
}

#[test]
fn closed_form_and_series_reject_other_measures() {
    let t = LevyMeasure::tempered(0.5, 1.0, 1.0).unwrap();
    assert!(potential_mass(&t, 0.0, 1.0, PotentialMethod::ClosedForm, &opts(1, 0)).is_err());
    assert!(potential_mass(&t, 0.0, 1.0, PotentialMethod::Series, &opts(1, 0)).is_err());
    assert!(potential_mass(&t, -1.0, 1.0, PotentialMethod::MonteCarlo, &opts(10, 0)).is_err());
    assert!(potential_mass(&t, 0.0, 0.0, PotentialMethod::MonteCarlo, &opts(10, 0)).is_err());
}

#[test]
fn exponential_bound_holds() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    for &k in &[0.1, 1.0, 5.0] {
        let b = check_exponential_bound(&nu, 2.0, k, &opts(1, 0)).unwrap();
        assert!(b.holds && b.std_error == 0.0, "{b:?}");
    }
    let atoms = LevyMeasure::atoms(&[(0.5, 1.0)]).unwrap();
    assert!(
        check_exponential_bound(&atoms, 3.0, 0.5, &opts(1, 0))
            .unwrap()
            .holds
    );
    let t = LevyMeasure::tempered(0.4, 2.0, 1.0).unwrap();
    assert!(
        check_exponential_bound(&t, 1.0, 1.0, &opts(1000, 2))
            .unwrap()
            .holds
    );
}

#[test]
fn iterated_potentials_of_the_stable_law() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    assert!((iterated_potential_one(&nu, 1.0, 2).unwrap() - 1.0).abs() < 1e-14);
    let z = 2.0f64;
    let v = iterated_potentials(&nu, z, 3).unwrap();
    assert_eq!(v[0], 1.0);
    assert!((v[3] - z.powf(1.5) / statrs::function::gamma::gamma(2.5)).abs() < 1e-13);
}

#[test]
fn volterra_march_matches_the_closed_form() {
    // wrapping the stable law in a sum hides it from the closed form
    let wrapped = LevyMeasure::sum(vec![LevyMeasure::stable(0.6, 1.0).unwrap()]);
    let exact = iterated_potentials(&LevyMeasure::stable(0.6, 1.0).unwrap(), 1.5, 4).unwrap();
    let v = iterated_potentials(&wrapped, 1.5, 4).unwrap();
    for k in 1..=4 {
        assert!(
            (v[k] - exact[k]).abs() < 2e-4 * exact[k],
            "k={k}: {} vs {}",
            v[k],
            exact[k]
        );
    }
}

#[test]
fn iterated_potentials_of_atoms_are_passage_moments() {
    // single atom at 1 with mass m: τ_z ~ Gamma(ceil z, m) for the closed passage
    let nu = LevyMeasure::atoms(&[(1.0, 2.0)]).unwrap();
    let v = iterated_potentials(&nu, 1.5, 3).unwrap();
    // E τ^k / k! for τ ~ Gamma(2, 2): C(k+1, k) / 2^k
    for k in 1..=3usize {
        let want = (k + 1) as f64 / 2f64.powi(k as i32);
        assert!((v[k] - want).abs() < 1e-13, "k={k}: {}", v[k]);
    }
    let z0 = iterated_potentials(&nu, 0.0, 2).unwrap();
    assert_eq!(z0, vec![1.0, 0.5, 0.25]);
}

#[test]
fn fractional_integral_of_one_is_the_potential_mass() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let g = GriddedFunction::from_scalar_fn(uniform_grid(0.0, 1.0, 33), |_| 1.0).unwrap();
    let det =
        fractional_integral(&nu, &g, 1.0, IntegralMethod::Deterministic, &opts(1, 0)).unwrap();
    assert!(det.generalized);
    assert!(
        (det.value - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-4,
        "{}",
        det.value
    );
}

#[test]
fn fractional_integral_atoms_exact_vs_monte_carlo() {
    let nu = LevyMeasure::atoms(&[(0.3, 1.0), (0.5, 2.0)]).unwrap();
    let g = GriddedFunction::from_scalar_fn(uniform_grid(0.0, 1.0, 101), |y| y * y).unwrap();
    let det =
        fractional_integral(&nu, &g, 1.0, IntegralMethod::Deterministic, &opts(1, 0)).unwrap();
    let mc = fractional_integral(&nu, &g, 1.0, IntegralMethod::MonteCarlo, &opts(5000, 6)).unwrap();
    assert!(!det.generalized);
    assert!(
        (det.value - mc.value).abs() < 4.0 * mc.std_error,
        "{} vs {} ± {}",
        det.value,
        mc.value,
        mc.std_error
    );
}

#[test]
fn fractional_integral_stable_monte_carlo() {
    let nu = LevyMeasure::stable(0.7, 1.0).unwrap();
    // I g for g(y) = y: x^{1+β} / Γ(2+β)
    let g = GriddedFunction::from_scalar_fn(uniform_grid(0.0, 1.0, 65), |y| y).unwrap();
    let want = 1.0 / statrs::function::gamma::gamma(2.7);
    let det =
        fractional_integral(&nu, &g, 1.0, IntegralMethod::Deterministic, &opts(1, 0)).unwrap();
    assert!((det.value - want).abs() < 1e-4, "{} vs {want}", det.value);
    let mc = fractional_integral(&nu, &g, 1.0, IntegralMethod::MonteCarlo, &opts(3000, 8)).unwrap();
    assert!(
        (mc.value - want).abs() < 4.0 * mc.std_error + 5e-3,
        "{} ± {} vs {want}",
        mc.value,
        mc.std_error
    );
}

#[test]
fn method_names_round_trip() {
    for m in [
        PotentialMethod::ClosedForm,
        PotentialMethod::Series,
        PotentialMethod::MonteCarlo,
    ] {
        assert_eq!(m.to_string().parse::<PotentialMethod>().unwrap(), m);
    }
}
