use super::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

// Double-exponential rule on (a, b); endpoint singularities are harmless.
// Nodes are placed by their distance to the nearer endpoint to keep precision.
fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let h = 1.0 / 64.0;
    let r = 0.5 * (b - a);
    let mut s = 0.0;
    for k in -400..=400 {
        let t = k as f64 * h;
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        let y = if u < 0.0 {
            a + r * 2.0 / (1.0 + (-2.0 * u).exp())
        } else {
            b - r * 2.0 / (1.0 + (2.0 * u).exp())
        };
        if y - a < 1e-100 || b - y < 1e-100 || w < 1e-300 {
            continue;
        }
        s += w * f(y);
    }
    s * h * r
}

// ∫_1^∞ via y = 1/u
fn tail_oracle<F: Fn(f64) -> f64>(f: F) -> f64 {
    tanh_sinh(
        |u| {
            if u < 1e-100 {
                0.0
            } else {
                f(1.0 / u) / (u * u)
            }
        },
        0.0,
        1.0,
    )
}

fn stable_density(beta: f64, y: f64) -> f64 {
    -1.0 / gamma(-beta) * y.powf(-1.0 - beta)
}

#[test]
fn stable_levy_integral_matches_oracle() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let v = nu.levy_condition_integral().unwrap();
    let oracle = tanh_sinh(|y| y * stable_density(0.5, y), 0.0, 1.0)
        + tail_oracle(|y| stable_density(0.5, y));
    assert!((v - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
    assert!((v - oracle).abs() < 1e-8, "{v} vs {oracle}");
}

#[test]
fn atom_levy_integral() {
    let nu = LevyMeasure::atoms(&[(1.0, 2.0)]).unwrap();
    assert_eq!(nu.levy_condition_integral().unwrap(), 2.0);
}

#[test]
fn truncation_reduces_levy_integral() {
    let nu = LevyMeasure::tempered(0.7, 0.5, 1.3).unwrap();
    let full = nu.levy_condition_integral().unwrap();
    for eps in [1e-3, 0.1, 0.9, 2.0] {
        let t = nu.truncate(eps).unwrap().levy_condition_integral().unwrap();
        assert!(t <= full + 1e-12);
    }
}

#[test]
fn stable_laplace_exponent() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    assert!((nu.laplace_exponent(4.0).unwrap() - 2.0).abs() < 1e-12);
    let oracle = tanh_sinh(|y| -(-4.0 * y).exp_m1() * stable_density(0.5, y), 0.0, 1.0)
        + tail_oracle(|y| -(-4.0 * y).exp_m1() * stable_density(0.5, y));
    assert!((oracle - 2.0).abs() < 1e-7, "{oracle}");
}

#[test]
fn tempered_laplace_exponent_matches_oracle() {
    let (beta, theta, c) = (0.6, 1.5, 0.8);
    let nu = LevyMeasure::tempered(beta, theta, c).unwrap();
    let dens = |y: f64| c * stable_density(beta, y) * (-theta * y).exp();
    for lambda in [0.3, 1.0, 5.0] {
        let f = |y: f64| -(-lambda * y).exp_m1() * dens(y);
        let oracle = tanh_sinh(f, 0.0, 1.0) + tail_oracle(f);
        let v = nu.laplace_exponent(lambda).unwrap();
        assert!(
            (v - oracle).abs() < 1e-7 * oracle.max(1.0),
            "λ={lambda}: {v} vs {oracle}"
        );
    }
}

#[test]
fn truncated_laplace_exponent_matches_oracle() {
    let nu = LevyMeasure::stable(0.5, 1.0)
        .unwrap()
        .truncate(0.25)
        .unwrap();
    let f = |y: f64| -(-2.0 * y).exp_m1() * stable_density(0.5, y);
    let oracle = tanh_sinh(f, 0.25, 1.0) + tail_oracle(f);
    let v = nu.laplace_exponent(2.0).unwrap();
    assert!((v - oracle).abs() < 1e-8, "{v} vs {oracle}");
}

#[test]
fn atom_laplace_exponent() {
    let nu = LevyMeasure::atoms(&[(2.0, 3.0)]).unwrap();
    for l in [0.0, 0.5, 1.0, 3.0] {
        assert!((nu.laplace_exponent(l).unwrap() - 3.0 * (1.0 - (-2.0 * l).exp())).abs() < 1e-14);
    }
    assert!(nu.laplace_exponent(-1.0).is_err());
}

#[test]
fn masses() {
    let nu = LevyMeasure::atoms(&[(1.0, 2.0), (3.0, 0.5)]).unwrap();
    assert_eq!(nu.total_mass(), 2.5);
    assert!(LevyMeasure::stable(0.5, 1.0)
        .unwrap()
        .total_mass()
        .is_infinite());
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let t1 = LevyMeasure::stable(0.5, 1.0)
        .unwrap()
        .truncate(1.0)
        .unwrap()
        .total_mass();
    assert!((t1 - inv_sqrt_pi).abs() < 1e-14);
    let oracle =
        tanh_sinh(|y| stable_density(0.5, y), 0.25, 1.0) + tail_oracle(|y| stable_density(0.5, y));
    let t2 = LevyMeasure::stable(0.5, 1.0)
        .unwrap()
        .truncate(0.25)
        .unwrap()
        .total_mass();
    assert!((t2 - 2.0 * inv_sqrt_pi).abs() < 1e-14);
    assert!((t2 - oracle).abs() < 1e-8);
}

#[test]
fn tempered_truncated_mass_matches_oracle() {
    let nu = LevyMeasure::tempered(0.4, 2.0, 1.0)
        .unwrap()
        .truncate(0.05)
        .unwrap();
    let f = |y: f64| stable_density(0.4, y) * (-2.0 * y).exp();
    let oracle = tanh_sinh(f, 0.05, 1.0) + tail_oracle(f);
    assert!((nu.total_mass() - oracle).abs() < 1e-8 * oracle);
}

#[test]
fn truncation_of_atoms() {
    let nu = LevyMeasure::atoms(&[(1.0, 2.0)]).unwrap();
    assert_eq!(nu.truncate(0.5).unwrap(), nu);
    let two = LevyMeasure::atoms(&[(0.2, 1.0), (1.0, 2.0)]).unwrap();
    assert_eq!(two.truncate(0.5).unwrap().total_mass(), 2.0);
    assert!(nu.truncate(0.0).is_err());
    // nested truncation keeps the stricter cutoff
    let s = LevyMeasure::stable(0.5, 1.0).unwrap();
    let a = s.truncate(0.1).unwrap().truncate(0.01).unwrap();
    assert_eq!(a, s.truncate(0.1).unwrap());
}

#[test]
fn drift_and_eps_selection() {
    let nu = LevyMeasure::stable(0.5, 1.0).unwrap();
    let d = nu.small_jump_drift(1e-2).unwrap();
    let oracle = tanh_sinh(|y| y * stable_density(0.5, y), 0.0, 1e-2);
    assert!((d - oracle).abs() < 1e-10);
    let eps = nu.eps_for_drift(1e-3).unwrap();
    assert!((nu.small_jump_drift(eps).unwrap() - 1e-3).abs() < 1e-9);
    let r = nu.eps_for_rate(100.0).unwrap();
    assert!((nu.tail_mass(r) - 100.0).abs() < 1e-6);
}

#[test]
fn atom_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let one = LevyMeasure::atoms(&[(1.0, 1.0)]).unwrap();
    for _ in 0..100 {
        assert_eq!(one.sample_jump(&mut rng).unwrap(), 1.0);
    }
    let two = LevyMeasure::atoms(&[(1.0, 1.0), (2.0, 3.0)]).unwrap();
    let s = two.sampler().unwrap();
    let n = 10_000;
    let hits = (0..n).filter(|_| s.sample(&mut rng) == 2.0).count() as f64 / n as f64;
    let sd = (0.75 * 0.25 / n as f64).sqrt();
    assert!((hits - 0.75).abs() < 3.0 * sd, "{hits}");
    assert!(LevyMeasure::stable(0.5, 1.0)
        .unwrap()
        .sample_jump(&mut rng)
        .is_err());
    assert!(LevyMeasure::zero().sample_jump(&mut rng).is_err());
}

#[test]
fn atom_sampling_cdf_distance() {
    let nu = LevyMeasure::atoms(&[(0.3, 0.5), (1.0, 1.0), (2.5, 2.0), (4.0, 0.25)]).unwrap();
    let s = nu.sampler().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 100_000;
    let mut counts = [0usize; 4];
    let pos = [0.3, 1.0, 2.5, 4.0];
    for _ in 0..n {
        let y = s.sample(&mut rng);
        counts[pos.iter().position(|&p| p == y).unwrap()] += 1;
    }
    let masses = [0.5, 1.0, 2.0, 0.25];
    let (mut emp, mut exact, mut dist) = (0.0, 0.0, 0.0f64);
    for i in 0..4 {
        emp += counts[i] as f64 / n as f64;
        exact += masses[i] / 3.75;
        dist = dist.max((emp - exact).abs());
    }
    assert!(dist <= 0.02, "{dist}");
}

#[test]
fn truncated_stable_sample_mean() {
    let eps = 0.01;
    let nu = LevyMeasure::stable(0.5, 1.0)
        .unwrap()
        .truncate(eps)
        .unwrap();
    let s = nu.sampler().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // the mean is infinite for β < 1 without an upper cap, so compare capped means
    let cap = 5.0;
    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng).min(cap)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let mass = nu.total_mass();
    let oracle = (tanh_sinh(|y| y * stable_density(0.5, y), eps, cap)
        + cap * cap * tail_oracle(|u| stable_density(0.5, u * cap)))
        / mass;
    assert!(
        (mean - oracle).abs() < 3.0 * (var / n as f64).sqrt(),
        "{mean} vs {oracle}"
    );
}

#[test]
fn tempered_sampler_matches_tail() {
    let nu = LevyMeasure::tempered(0.5, 1.0, 1.0)
        .unwrap()
        .truncate(0.1)
        .unwrap();
    let s = nu.sampler().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 50_000;
    let y0 = 0.5;
    let hits = (0..n).filter(|_| s.sample(&mut rng) >= y0).count() as f64 / n as f64;
    let p = nu.tail_mass(y0) / nu.total_mass();
    assert!(
        (hits - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(),
        "{hits} vs {p}"
    );
}

#[test]
fn invalid_constructions() {
    assert!(LevyMeasure::stable(1.0, 1.0).is_err());
    assert!(LevyMeasure::stable(0.5, 0.0).is_err());
    assert!(LevyMeasure::tempered(0.5, -1.0, 1.0).is_err());
    assert!(LevyMeasure::atoms(&[(0.0, 1.0)]).is_err());
    assert!(LevyMeasure::atoms(&[(1.0, -1.0)]).is_err());
    assert!(LevyMeasure::mixture(&[]).is_err());
}

#[test]
fn mixture_and_sum_are_termwise() {
    let mix = LevyMeasure::mixture(&[(0.4, 0.3), (0.8, 0.7)]).unwrap();
    let l: f64 = 2.5;
    let expect = 0.3 * l.powf(0.4) + 0.7 * l.powf(0.8);
    assert!((mix.laplace_exponent(l).unwrap() - expect).abs() < 1e-12);
    let sum = LevyMeasure::sum(vec![
        LevyMeasure::stable(0.5, 2.0).unwrap(),
        LevyMeasure::atoms(&[(1.0, 1.0)]).unwrap(),
    ]);
    let expect = 2.0 * l.sqrt() + 1.0 - (-l).exp();
    assert!((sum.laplace_exponent(l).unwrap() - expect).abs() < 1e-12);
    assert_eq!(mix.stable_lower_bound(), Some((0.8, 0.7)));
    assert_eq!(sum.stable_lower_bound(), Some((0.5, 2.0)));
    assert!((mix.boundary_exponent() - 0.8).abs() < 1e-15);
}

#[test]
fn parse_examples() {
    let m = parse_measure("stable(beta=0.5,c=1)").unwrap();
    assert_eq!(m, LevyMeasure::stable(0.5, 1.0).unwrap());
    let m = parse_measure(" atoms[ (1, 2.0), (3,0.5) ] ").unwrap();
    assert_eq!(m.total_mass(), 2.5);
    let m = parse_measure("trunc(stable(beta=0.5,c=1),eps=1e-3)").unwrap();
    assert!(m.is_finite());
    let m = parse_measure("mix(0.3*stable(beta=0.4),0.7*stable(beta=0.8))").unwrap();
    assert_eq!(m, LevyMeasure::mixture(&[(0.4, 0.3), (0.8, 0.7)]).unwrap());
    let m = parse_measure("sum(atoms[(1,1)],tempered(beta=0.3,theta=2))").unwrap();
    assert!(m.total_mass().is_infinite());
    assert_eq!(parse_measure("atoms[]").unwrap().total_mass(), 0.0);
}

#[test]
fn parse_errors_report_position() {
    for (src, pos) in [
        ("stable(beta=0.5,c=1", 19),
        ("stable(bta=0.5)", 7),
        ("stabel(beta=0.5)", 0),
        ("atoms[(1,x)]", 9),
        ("stable(beta=1.5)", 0),
        ("stable(beta=0.5) junk", 17),
    ] {
        match parse_measure(src) {
            Err(Error::Parse { pos: p, .. }) => assert_eq!(p, pos, "{src}"),
            other => panic!("{src}: {other:?}"),
        }
    }
}

fn arb_measure() -> impl Strategy<Value = LevyMeasure> {
    let leaf = prop_oneof![
        (0.05f64..0.95, 0.1f64..3.0).prop_map(|(b, c)| LevyMeasure::stable(b, c).unwrap()),
        (0.05f64..0.95, 0.0f64..3.0, 0.1f64..3.0)
            .prop_map(|(b, t, c)| LevyMeasure::tempered(b, t, c).unwrap()),
        proptest::collection::vec((0.01f64..5.0, 0.01f64..3.0), 0..4)
            .prop_map(|a| LevyMeasure::atoms(&a).unwrap()),
        proptest::collection::vec((0.05f64..0.95, 0.1f64..2.0), 1..3)
            .prop_map(|c| LevyMeasure::mixture(&c).unwrap()),
    ];
    leaf.prop_recursive(2, 6, 3, |inner| {
        prop_oneof![
            (inner.clone(), 1e-3f64..2.0).prop_map(|(m, e)| m.truncate(e).unwrap()),
            proptest::collection::vec(inner, 1..3).prop_map(LevyMeasure::sum),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplace_exponent_monotone_concave(nu in arb_measure()) {
        let grid = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
        let vals: Vec<f64> = grid.iter().map(|&l| nu.laplace_exponent(l).unwrap()).collect();
        prop_assert_eq!(vals[0], 0.0);
        for w in vals.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[1].abs().max(1.0));
        }
        // concavity on the uniform part of the grid
        let uni = [0.0, 1.0, 2.0, 3.0, 4.0];
        let v: Vec<f64> = uni.iter().map(|&l| nu.laplace_exponent(l).unwrap()).collect();
        for w in v.windows(3) {
            prop_assert!(w[0] + w[2] - 2.0 * w[1] <= 1e-8 * w[1].abs().max(1.0));
        }
    }

    #[test]
    fn truncation_is_dominated(nu in arb_measure(), eps in 1e-3f64..3.0) {
        let t = nu.truncate(eps).unwrap();
        prop_assert!(t.is_finite());
        prop_assert!((t.total_mass() - nu.tail_mass(eps)).abs() <= 1e-8 * t.total_mass().max(1.0));
        for l in [0.5, 1.0, 3.0] {
            prop_assert!(t.laplace_exponent(l).unwrap() <= nu.laplace_exponent(l).unwrap() + 1e-9);
        }
    }

    #[test]
    fn display_round_trips(nu in arb_measure()) {
        let text = nu.to_string();
        let back = parse_measure(&text).unwrap();
        prop_assert_eq!(back, nu);
    }
}
