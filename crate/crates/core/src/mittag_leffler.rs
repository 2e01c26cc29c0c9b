//! Classical Mittag-Leffler functions and the generalized families
//! `E_{(ν),z}(-λ) = E e^{-λ τ_z}`, `E_{(ν),z}(A) = E e^{τ_z A}` with
//! `τ_z = inf{t: S_t >= z}`.
//!
//! The series route expands the exponential in powers of the iterated
//! potentials `I_k(z) = [(I^{(ν)}_0)^k 1](z) = E τ_z^k / k!`. When ν dominates
//! `C·stable(β)`, the passage is stochastically faster than the stable one and
//! `I_k(z) <= (z^β/C)^k / Γ(1+kβ)`, which gives the tail majorant.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::linalg::{expm, log_norm2, spectral_norm};
use crate::mc::{self, McOptions, VecWelford, Welford};
use crate::measure::LevyMeasure;
use crate::paths::Subordinator;
use crate::potential::iterated_potentials;
use crate::quad::{gauss_legendre, integrate, QuadConfig};

/// Cap on the number of series terms.
pub const SERIES_CAP: usize = 200;
/// Target bound on the neglected series tail.
pub const SERIES_TAIL_TOL: f64 = 1e-10;

/// Beyond `|s|^{1/β}` of this size the alternating series loses too many
/// digits and the integral representation takes over.
const SERIES_REACH: f64 = 8.0;

/// `E_β(s) = Σ_k s^k / Γ(1 + βk)` for real `s`, `0 < β <= 1`.
pub fn classical_ml(beta: f64, s: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid(format!(
            "Mittag-Leffler index must lie in (0, 1], got {beta}"
        )));
    }
    if !s.is_finite() {
        return Err(invalid("argument must be finite"));
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    let reach = s.abs().powf(1.0 / beta);
    if s > 0.0 && reach > 700.0 {
        return Err(Error::Overflow(format!(
            "E_{beta}({s}) exceeds the floating-point range"
        )));
    }
    if beta == 1.0 {
        return Ok(s.exp());
    }
    if s > 0.0 || reach <= SERIES_REACH {
        return Ok(series_real(beta, s));
    }
    negative_integral(beta, -s)
}

fn series_real(beta: f64, s: f64) -> f64 {
    let ls = s.abs().ln();
    let peak = s.abs().powf(1.0 / beta) / beta;
    let mut sum = 1.0;
    for k in 1..100_000usize {
        let kf = k as f64;
        let mag = (kf * ls - ln_gamma(1.0 + beta * kf)).exp();
        let term = if s < 0.0 && k % 2 == 1 { -mag } else { mag };
        sum += term;
        if kf > peak && mag <= 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// `E_β(-x)` for `x > 0` from the spectral representation
/// `(sin βπ / πβ) ∫₀^∞ e^{-w^{1/β}} x / (w² + 2wx cos βπ + x²) dw`.
fn negative_integral(beta: f64, x: f64) -> Result<f64> {
    let (sn, cs) = (beta * std::f64::consts::PI).sin_cos();
    let f = |w: f64| (-w.powf(1.0 / beta)).exp() * x / (w * w + 2.0 * w * cs * x + x * x);
    let top = 50f64.powf(beta);
    let cfg = QuadConfig {
        abs_tol: 1e-16,
        rel_tol: 1e-13,
        max_intervals: 4000,
    };
    let mut total = 0.0;
    let mut lo = 0.0;
    // the denominator is smallest near w = x; give the adaptive rule a breakpoint there
    for hi in [x.min(top), top] {
        if hi > lo {
            total += integrate(f, lo, hi, cfg)?.value;
            lo = hi;
        }
    }
    Ok(total * sn / (std::f64::consts::PI * beta))
}

/// Series value for complex arguments of moderate size.
pub fn classical_ml_complex(beta: f64, s: Complex64) -> Result<Complex64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid(format!(
            "Mittag-Leffler index must lie in (0, 1], got {beta}"
        )));
    }
    if s.im == 0.0 {
        return classical_ml(beta, s.re).map(Complex64::from);
    }
    let r = s.norm();
    if r.powf(1.0 / beta) > 30.0 {
        return Err(Error::Overflow(format!(
            "|s| = {r} is too large for the series at β = {beta}"
        )));
    }
    let peak = r.powf(1.0 / beta) / beta;
    let mut sum = Complex64::new(1.0, 0.0);
    let mut pow = Complex64::new(1.0, 0.0);
    for k in 1..100_000usize {
        let kf = k as f64;
        pow *= s;
        let term = pow * (-ln_gamma(1.0 + beta * kf)).exp();
        sum += term;
        if kf > peak && term.norm() <= 1e-17 * sum.norm().max(1e-300) {
            break;
        }
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MlMethod {
    FirstPassage,
    Series,
    Quadrature,
}

impl fmt::Display for MlMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FirstPassage => "first_passage",
            Self::Series => "series",
            Self::Quadrature => "quadrature",
        })
    }
}

impl FromStr for MlMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_passage" | "first-passage" | "mc" => Ok(Self::FirstPassage),
            "series" => Ok(Self::Series),
            "quadrature" => Ok(Self::Quadrature),
            _ => Err(invalid(format!(
                "unknown method {s:?} (first_passage, series, quadrature)"
            ))),
        }
    }
}

/// A (scalar or matrix) value with its Monte Carlo error (zero for series).
#[derive(Debug, Clone, PartialEq)]
pub struct MLValue<T> {
    pub value: T,
    pub std_error: T,
    pub method: MlMethod,
    pub samples: usize,
    pub eps: Option<f64>,
}

/// A constant generator `A` with `‖e^{tA}‖₂ <= M e^{tm}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGenerator {
    a: DMatrix<f64>,
    growth_m: f64,
    growth_rate: f64,
}

impl MatrixGenerator {
    /// Growth constants default to `M = 1`, `m = μ₂(A)` (the log-norm).
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(invalid(format!(
                "generator must be a non-empty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(invalid("generator entries must be finite"));
        }
        let m = log_norm2(&a);
        Ok(Self {
            a,
            growth_m: 1.0,
            growth_rate: m,
        })
    }

    pub fn with_growth(mut self, m_const: f64, rate: f64) -> Result<Self> {
        if !(m_const >= 1.0) || !rate.is_finite() {
            return Err(invalid("growth constants need M >= 1 and a finite rate"));
        }
        self.growth_m = m_const;
        self.growth_rate = rate;
        Ok(self)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn growth(&self) -> (f64, f64) {
        (self.growth_m, self.growth_rate)
    }

    pub fn is_contraction(&self) -> bool {
        self.growth_m <= 1.0 && self.growth_rate <= 1e-12
    }
}

fn check_z(z: f64) -> Result<()> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(invalid(format!("z must be positive and finite, got {z}")));
    }
    Ok(())
}

fn lower_bound(nu: &LevyMeasure) -> Result<(f64, f64)> {
    nu.stable_lower_bound().ok_or_else(|| {
        Error::Admissibility(format!(
            "the series needs ν >= C·stable(β) for some β, C > 0; {nu} has no such bound"
        ))
    })
}

/// Majorant terms `b_k = (r z^β / C)^k / Γ(1 + kβ)` until the tail is below
/// [`SERIES_TAIL_TOL`]; returns the number of terms needed.
fn terms_needed(r: f64, z: f64, beta: f64, c: f64) -> Result<usize> {
    if r == 0.0 {
        return Ok(1);
    }
    let l = (r * z.powf(beta) / c).ln();
    let b = |k: usize| (k as f64 * l - ln_gamma(1.0 + k as f64 * beta)).exp();
    for k in 1..SERIES_CAP {
        let (bk, bk1) = (b(k), b(k + 1));
        // the ratio b_{k+1}/b_k decreases, so below 1/2 the tail is <= 2 b_k
        if bk1 / bk < 0.5 && 2.0 * bk < SERIES_TAIL_TOL {
            return Ok(k);
        }
    }
    Err(Error::SeriesDiverged {
        cap: SERIES_CAP,
        msg: format!("majorant tail above {SERIES_TAIL_TOL:e} after {SERIES_CAP} terms"),
    })
}

/// `E_{(ν),z}(-λ)`.
pub fn gen_ml_scalar(
    nu: &LevyMeasure,
    z: f64,
    lambda: f64,
    method: MlMethod,
    opts: &McOptions,
) -> Result<MLValue<f64>> {
    check_z(z)?;
    if !lambda.is_finite() {
        return Err(invalid("λ must be finite"));
    }
    if lambda == 0.0 {
        return Ok(MLValue {
            value: 1.0,
            std_error: 0.0,
            method,
            samples: 0,
            eps: None,
        });
    }
    match method {
        MlMethod::FirstPassage => {
            let grid = gen_ml_grid(nu, &[z], &[lambda], opts)?;
            Ok(grid[0][0].clone())
        }
        MlMethod::Series => {
            let (beta, c) = lower_bound(nu)?;
            let k = terms_needed(lambda.abs(), z, beta, c)?;
            let ik = iterated_potentials(nu, z, k)?;
            let mut sum = 0.0;
            let mut biggest: f64 = 0.0;
            for (j, v) in ik.iter().enumerate() {
                let t = (-lambda).powi(j as i32) * v;
                biggest = biggest.max(t.abs());
                sum += t;
            }
            if biggest * 1e-15 > 1e-8 {
                log::warn!("alternating series with terms up to {biggest:.2e}: expect cancellation error near {:.1e}", biggest * 1e-16);
            }
            Ok(MLValue {
                value: sum,
                std_error: 0.0,
                method,
                samples: 0,
                eps: None,
            })
        }
        MlMethod::Quadrature => quadrature(nu, z, lambda, opts),
    }
}

/// First-passage estimates of `E_{(ν),z}(-λ)` for every `(z, λ)` from one
/// path ensemble; result indexed `[z][λ]`.
pub fn gen_ml_grid(
    nu: &LevyMeasure,
    zs: &[f64],
    lambdas: &[f64],
    opts: &McOptions,
) -> Result<Vec<Vec<MLValue<f64>>>> {
    for &z in zs {
        check_z(z)?;
    }
    if opts.samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let sub = Subordinator::from_options(nu, opts.truncation)?;
    let mut order: Vec<usize> = (0..zs.len()).collect();
    order.sort_by(|&i, &j| zs[i].total_cmp(&zs[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| zs[i]).collect();
    if lambdas.iter().any(|&l| l < 0.0) {
        log::warn!(
            "λ < 0: the estimator e^{{|λ|τ}} has heavy tails and possibly infinite variance"
        );
    }
    let parts = mc::run_batches(opts.samples, opts.seed, |_, n, rng| {
        let mut acc = vec![vec![Welford::default(); lambdas.len()]; zs.len()];
        let mut t = vec![0.0; zs.len()];
        for _ in 0..n {
            sub.first_passages(&sorted, false, rng, &mut t);
            for (k, &i) in order.iter().enumerate() {
                for (j, &l) in lambdas.iter().enumerate() {
                    acc[i][j].push(if l == 0.0 { 1.0 } else { (-l * t[k]).exp() });
                }
            }
        }
        acc
    });
    let eps = sub.truncation().eps();
    let mut out = Vec::with_capacity(zs.len());
    for i in 0..zs.len() {
        let mut row = Vec::with_capacity(lambdas.len());
        for j in 0..lambdas.len() {
            let mut w = Welford::default();
            for p in &parts {
                w.merge(&p[i][j]);
            }
            row.push(MLValue {
                value: w.mean,
                std_error: w.std_error(),
                method: MlMethod::FirstPassage,
                samples: opts.samples,
                eps,
            });
        }
        out.push(row);
    }
    Ok(out)
}

/// Nodes of the quadrature method; each path contributes `Σ w_i 1{τ_z <= t_i}`.
const QUAD_NODES: usize = 48;

/// `E_{(ν),z}(-λ) = ∫₀^∞ λ e^{-λt} P(S_t >= z) dt` integrated in `u = 1 - e^{-λt}`
/// by Gauss-Legendre, with the transition probabilities estimated jointly on
/// each sampled path.
fn quadrature(nu: &LevyMeasure, z: f64, lambda: f64, opts: &McOptions) -> Result<MLValue<f64>> {
    if lambda < 0.0 {
        return Err(invalid("the quadrature method needs λ >= 0"));
    }
    if opts.samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let sub = Subordinator::from_options(nu, opts.truncation)?;
    let (x, w) = gauss_legendre(QUAD_NODES);
    let nodes: Vec<(f64, f64)> = x
        .iter()
        .zip(&w)
        .map(|(&t, &wt)| (-(-0.5 * (t + 1.0)).ln_1p() / lambda, 0.5 * wt))
        .collect();
    let parts = mc::run_batches(opts.samples, opts.seed, |_, n, rng| {
        let mut acc = Welford::default();
        for _ in 0..n {
            let tau = sub.first_passage(z, false, rng);
            acc.push(
                nodes
                    .iter()
                    .filter(|(t, _)| tau <= *t)
                    .map(|(_, wt)| wt)
                    .sum(),
            );
        }
        acc
    });
    let w = mc::reduce_welford(&parts);
    Ok(MLValue {
        value: w.mean,
        std_error: w.std_error(),
        method: MlMethod::Quadrature,
        samples: opts.samples,
        eps: sub.truncation().eps(),
    })
}

/// `E_{(ν),z}(A)`.
pub fn gen_ml_operator(
    nu: &LevyMeasure,
    z: f64,
    gen: &MatrixGenerator,
    method: MlMethod,
    opts: &McOptions,
) -> Result<MLValue<DMatrix<f64>>> {
    check_z(z)?;
    let d = gen.dim();
    let a = gen.matrix();
    match method {
        MlMethod::FirstPassage => {
            if opts.samples == 0 {
                return Err(invalid("need at least one sample"));
            }
            if !gen.is_contraction() {
                log::warn!(
                    "A is not a contraction (m = {:.3}); the variance grows like E e^{{2mτ}}",
                    gen.growth().1
                );
            }
            let sub = Subordinator::from_options(nu, opts.truncation)?;
            let parts = mc::run_batches(opts.samples, opts.seed, |_, n, rng| {
                let mut acc = VecWelford::new(d * d);
                for _ in 0..n {
                    let tau = sub.first_passage(z, false, rng);
                    if tau.is_finite() {
                        acc.push(expm(&(a * tau)).as_slice());
                    } else {
                        acc.push(&vec![f64::NAN; d * d]);
                    }
                }
                acc
            });
            let w = mc::reduce_vec_welford(d * d, &parts);
            Ok(MLValue {
                value: DMatrix::from_column_slice(d, d, &w.mean),
                std_error: DMatrix::from_column_slice(d, d, &w.std_error()),
                method,
                samples: opts.samples,
                eps: sub.truncation().eps(),
            })
        }
        MlMethod::Series => {
            let (beta, c) = lower_bound(nu)?;
            let k = terms_needed(spectral_norm(a), z, beta, c)?;
            let ik = iterated_potentials(nu, z, k)?;
            let mut sum = DMatrix::<f64>::identity(d, d);
            let mut pow = DMatrix::<f64>::identity(d, d);
            for v in &ik[1..] {
                pow = &pow * a;
                sum += &pow * *v;
            }
            if sum.iter().any(|v| !v.is_finite()) {
                return Err(Error::SeriesDiverged {
                    cap: SERIES_CAP,
                    msg: "non-finite partial sum".into(),
                });
            }
            Ok(MLValue {
                value: sum,
                std_error: DMatrix::zeros(d, d),
                method,
                samples: 0,
                eps: None,
            })
        }
        MlMethod::Quadrature => Err(invalid("the quadrature method is scalar only")),
    }
}

/// `M · E_β(max(m, 0) z^β / C)`, bounding `‖E_{(ν),z}(A)‖₂` when ν >= C·stable(β).
pub fn ml_norm_bound(nu: &LevyMeasure, z: f64, gen: &MatrixGenerator) -> Result<f64> {
    check_z(z)?;
    let (beta, c) = lower_bound(nu)?;
    let (mc, m) = gen.growth();
    Ok(mc * classical_ml(beta, m.max(0.0) * z.powf(beta) / c)?)
}

#[cfg(test)]
mod tests;
