//! Matrix exponential and norm helpers.
//!
//! `expm` is the Padé scaling-and-squaring scheme of Higham (2005): pick the
//! lowest Padé degree in {3, 5, 7, 9, 13} whose backward-error threshold
//! covers `‖A‖₁`, otherwise scale by `2^{-s}` for degree 13 and square back.

use nalgebra::{DMatrix, Matrix2, SMatrix};

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1512.0,
    56.0,
    1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut pow = DMatrix::identity(n, n);
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for k in (0..b.len()).step_by(2) {
        v += &pow * b[k];
        u += &pow * b[k + 1];
        pow = &pow * &a2;
    }
    (a * u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let b = &B13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = a * inner_u;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    (u, v)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> DMatrix<f64> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular inside the threshold")
}

/// `e^A` for a real square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }
    if n == 2 {
        let m = Matrix2::new(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
        let e = expm2(&m);
        return DMatrix::from_column_slice(2, 2, e.as_slice());
    }
    let nrm = norm1(a);
    for &(m, theta) in &THETA {
        if nrm <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(a, b);
            return solve_pade(u, v);
        }
    }
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s);
    let (u, v) = pade13(&scaled);
    let mut r = solve_pade(u, v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Closed-form `e^A` for 2×2 matrices via `A = μI + N`, `N² = δ I`.
pub fn expm2(a: &Matrix2<f64>) -> Matrix2<f64> {
    let mu = 0.5 * (a[(0, 0)] + a[(1, 1)]);
    let nmat = a - Matrix2::identity() * mu;
    // N² = δ·I with δ = -det(N)
    let delta = nmat[(0, 0)] * nmat[(0, 0)] + nmat[(0, 1)] * nmat[(1, 0)];
    let (c, s) = if delta > 1e-8 {
        let r = delta.sqrt();
        (r.cosh(), r.sinh() / r)
    } else if delta < -1e-8 {
        let r = (-delta).sqrt();
        (r.cos(), r.sin() / r)
    } else {
        // Taylor expansions of cosh(√δ) and sinh(√δ)/√δ
        (
            1.0 + delta / 2.0 + delta * delta / 24.0 + delta.powi(3) / 720.0,
            1.0 + delta / 6.0 + delta * delta / 120.0 + delta.powi(3) / 5040.0,
        )
    };
    (Matrix2::identity() * c + nmat * s) * mu.exp()
}

/// `(e^{ΔA}, ∫₀^Δ e^{uA} du)` from one exponential of an augmented block matrix.
pub fn expm_with_integral(a: &DMatrix<f64>, delta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(a * delta));
    for i in 0..n {
        big[(i, n + i)] = delta;
    }
    let e = expm(&big);
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
    )
}

/// `(e^{ΔA}, ∫₀^Δ e^{uA} du)`, fast for small matrices: Taylor series on
/// `ΔA / 2^s` followed by the doubling rule `Ψ_{2h} = Ψ_h + E_h Ψ_h`.
pub fn exp_pair(a: &DMatrix<f64>, delta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    match a.nrows() {
        1 => {
            let x = a[(0, 0)] * delta;
            let psi = if x.abs() > 1e-8 {
                delta * x.exp_m1() / x
            } else {
                delta * (1.0 + 0.5 * x)
            };
            (
                DMatrix::from_element(1, 1, x.exp()),
                DMatrix::from_element(1, 1, psi),
            )
        }
        2 => lift(exp_pair_static::<2>(&to_static(a), delta)),
        3 => lift(exp_pair_static::<3>(&to_static(a), delta)),
        4 => lift(exp_pair_static::<4>(&to_static(a), delta)),
        _ => expm_with_integral(a, delta),
    }
}

fn to_static<const D: usize>(a: &DMatrix<f64>) -> SMatrix<f64, D, D> {
    SMatrix::from_iterator(a.iter().copied())
}

fn lift<const D: usize>(
    (e, p): (SMatrix<f64, D, D>, SMatrix<f64, D, D>),
) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_column_slice(D, D, e.as_slice()),
        DMatrix::from_column_slice(D, D, p.as_slice()),
    )
}

pub fn exp_pair_static<const D: usize>(
    a: &SMatrix<f64, D, D>,
    delta: f64,
) -> (SMatrix<f64, D, D>, SMatrix<f64, D, D>) {
    let x = a * delta;
    let nrm = x
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if nrm > 0.5 {
        (nrm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = 2f64.powi(-s);
    let y = x * scale;
    let id = SMatrix::<f64, D, D>::identity();
    let (mut term, mut e, mut p) = (id, id, id);
    // at ‖y‖ <= 1/2 the truncation error of 14 terms is below 3e-17
    for k in 1..=14 {
        term = term * y / k as f64;
        e += term;
        p += term / (k + 1) as f64;
    }
    let mut psi = p * (delta * scale);
    for _ in 0..s {
        psi += e * psi;
        e = e * e;
    }
    (e, psi)
}

/// Largest eigenvalue of the symmetric part, the Euclidean log-norm `μ₂(A)`;
/// `‖e^{tA}‖₂ <= e^{t μ₂(A)}` for all `t >= 0`.
pub fn log_norm2(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral norm `‖A‖₂`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().copied().fold(0.0, f64::max)
}
