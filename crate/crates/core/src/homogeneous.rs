//! `D^{(ν)}_{a+*} f = A f + g`, `f(a) = Y`, for a constant matrix `A`:
//!
//! `f(x) = E e^{τ A} Y + E ∫₀^τ e^{tA} g(x - S_t) dt`, `τ = τ_{x-a}`.
//!
//! One excursion per sample runs past the largest level and serves every grid
//! point. On a uniform grid with step `h` the convolution term bins each
//! constant stretch of the path, `S = (b + θ) h` on `[t_j, t_{j+1})`, into
//! `Q0_b += (1-θ) e^{t_j A} Ψ_j` and `Q1_b += θ e^{t_j A} Ψ_j`, with
//! `Ψ_j = ∫₀^{Δ_j} e^{uA} du`; then `f_i` picks up
//! `Σ_{b<i} Q0_b g_{i-b} + Q1_b g_{i-b-1}`, which is `g` linearly interpolated
//! between nodes.
//!
//! Given the jump sizes, the holding times are independent `Exp(m)` with
//! `m = ‖ν_ε‖`, so they can be integrated out: `E e^{WA} = m (mI - A)^{-1}` and
//! `E ∫₀^W e^{uA} du = (mI - A)^{-1}`. [`PathEstimator::Conditional`] uses
//! these factors in place of the sampled exponentials; it has the same mean
//! and a smaller variance, and costs one matrix product per jump.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::curve::{CurveMeta, SolutionCurve};
use crate::error::{invalid, Error, Result};
use crate::func::{is_uniform, GriddedFunction};
use crate::linalg::exp_pair;
use crate::mc::{self, McOptions};
use crate::measure::LevyMeasure;
use crate::mittag_leffler::{gen_ml_grid, MatrixGenerator};
use crate::paths::{path_sampler, GradedSubordinator};

/// How the time integrals along a sampled path are evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathEstimator {
    /// Holding times integrated out given the jump sizes.
    #[default]
    Conditional,
    /// Exponentials of the sampled holding times.
    Pathwise,
}

impl fmt::Display for PathEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Conditional => "conditional",
            Self::Pathwise => "pathwise",
        })
    }
}

impl FromStr for PathEstimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional" => Ok(Self::Conditional),
            "pathwise" => Ok(Self::Pathwise),
            _ => Err(invalid(format!(
                "unknown estimator {s:?} (conditional, pathwise)"
            ))),
        }
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(invalid("the grid needs at least two points"));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid(
            "grid points must be finite and strictly increasing",
        ));
    }
    Ok(())
}

/// Source values at the grid nodes, `g(a+)` at node 0; zero without a source.
pub(crate) fn source_nodes(
    g: Option<&GriddedFunction>,
    grid: &[f64],
    d: usize,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; grid.len() * d];
    if let Some(g) = g {
        if g.dim() != d {
            return Err(invalid(format!(
                "source term has dimension {}, expected {d}",
                g.dim()
            )));
        }
        out[..d].copy_from_slice(g.right_limit());
        for (i, &x) in grid.iter().enumerate().skip(1) {
            g.eval_into(x, &mut out[i * d..(i + 1) * d]);
        }
    }
    Ok(out)
}

fn assemble(
    grid: &[f64],
    y: &DVector<f64>,
    mean: &[f64],
    se: &[f64],
    meta: CurveMeta,
) -> Result<SolutionCurve> {
    let d = y.len();
    let mut values = vec![y.clone()];
    let mut errs = vec![DVector::zeros(d)];
    for i in 0..grid.len() - 1 {
        values.push(DVector::from_column_slice(&mean[i * d..(i + 1) * d]));
        errs.push(DVector::from_column_slice(&se[i * d..(i + 1) * d]));
    }
    SolutionCurve::new(grid.to_vec(), values, errs, meta)
}

/// `f(a+) = (‖ν‖ I - A)^{-1} (‖ν‖ Y + g(a))` for finite ν.
fn finite_right_limit(
    nu: &LevyMeasure,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    g0: &[f64],
) -> Option<DVector<f64>> {
    if !nu.is_finite() {
        return None;
    }
    let m = nu.total_mass();
    let d = y.len();
    let lhs = DMatrix::<f64>::identity(d, d) * m - a;
    lhs.lu().solve(&(y * m + DVector::from_column_slice(g0)))
}

/// `(m (mI - A)^{-1}, (mI - A)^{-1})` per tier, `m` the tier intensity.
pub(crate) fn held_factors(
    sub: &GradedSubordinator,
    a: &DMatrix<f64>,
) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    let d = a.nrows();
    sub.tiers()
        .iter()
        .map(|t| {
            let m = t.rate();
            let p = (DMatrix::<f64>::identity(d, d) * m - a)
                .try_inverse()
                .ok_or_else(|| {
                    Error::Admissibility(format!("mI - A is singular at the jump rate m = {m}"))
                })?;
            Ok((&p * m, p))
        })
        .collect()
}

/// Solution on a uniform `grid` starting at `a = grid[0]`.
pub fn solve_const(
    nu: &LevyMeasure,
    gen: &MatrixGenerator,
    y: &DVector<f64>,
    g: Option<&GriddedFunction>,
    grid: &[f64],
    opts: &McOptions,
) -> Result<SolutionCurve> {
    solve_const_with(nu, gen, y, g, grid, opts, PathEstimator::default())
}

pub fn solve_const_with(
    nu: &LevyMeasure,
    gen: &MatrixGenerator,
    y: &DVector<f64>,
    g: Option<&GriddedFunction>,
    grid: &[f64],
    opts: &McOptions,
    estimator: PathEstimator,
) -> Result<SolutionCurve> {
    let d = gen.dim();
    check_grid(grid)?;
    if !is_uniform(grid) {
        return Err(invalid(
            "the constant-coefficient solver needs a uniform grid",
        ));
    }
    if y.len() != d {
        return Err(invalid(format!(
            "boundary value has dimension {}, expected {d}",
            y.len()
        )));
    }
    if opts.samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let contraction = gen.is_contraction();
    if !contraction && nu.stable_lower_bound().is_none() {
        return Err(Error::Admissibility(format!(
            "A grows like e^{{{:.3} t}}; without a contraction the representation needs ν >= C·stable(β), and {nu} declares no such bound",
            gen.growth().1
        )));
    }
    let gn = source_nodes(g, grid, d)?;
    let has_source = gn.iter().any(|&v| v != 0.0);
    let n = grid.len() - 1;
    let span = grid[n] - grid[0];
    let h = span / n as f64;
    let sub = path_sampler(nu, opts, span, h)?;
    let a_mat = gen.matrix();
    let dd = d * d;
    let held = held_factors(&sub, a_mat)?;

    let parts = mc::run_batches(
        opts.samples,
        opts.seed,
        |_, size, rng| -> Result<(usize, Vec<f64>)> {
            // difference array over levels for E e^{τA} Y
            let mut diff = vec![0.0; (n + 2) * d];
            let mut q0 = vec![0.0; if has_source { n * dd } else { 0 }];
            let mut q1 = q0.clone();
            for _ in 0..size {
                let ex = sub.sample_excursion_until(span, 0.0, rng)?;
                let mut e_run = DMatrix::<f64>::identity(d, d);
                let (mut m, mut next) = (DMatrix::<f64>::zeros(d, d), DMatrix::<f64>::zeros(d, d));
                let mut v = DVector::<f64>::zeros(d);
                let (mut t, mut s) = (0.0, 0.0);
                for (&tj, &zj) in ex.times.iter().zip(&ex.sizes) {
                    let sampled;
                    let (e, psi) = match estimator {
                        PathEstimator::Conditional => {
                            let f = &held[sub.tier(s)];
                            (&f.0, &f.1)
                        }
                        PathEstimator::Pathwise => {
                            sampled = exp_pair(a_mat, tj - t);
                            (&sampled.0, &sampled.1)
                        }
                    };
                    if has_source {
                        e_run.mul_to(psi, &mut m);
                        let u = s / h;
                        let b = (u.floor() as usize).min(n - 1);
                        let th = (u - b as f64).clamp(0.0, 1.0);
                        let (r0, r1) =
                            (&mut q0[b * dd..(b + 1) * dd], &mut q1[b * dd..(b + 1) * dd]);
                        for (k, w) in m.iter().enumerate() {
                            r0[k] += (1.0 - th) * w;
                            r1[k] += th * w;
                        }
                    }
                    e_run.mul_to(e, &mut next);
                    std::mem::swap(&mut e_run, &mut next);
                    let s_new = s + zj;
                    let lo = (s / h).floor() as usize + 1;
                    let hi = if s_new >= span {
                        n
                    } else {
                        ((s_new / h).floor() as usize).min(n)
                    };
                    if lo <= hi {
                        e_run.mul_to(y, &mut v);
                        for k in 0..d {
                            diff[lo * d + k] += v[k];
                            diff[(hi + 1) * d + k] -= v[k];
                        }
                    }
                    t = tj;
                    s = s_new;
                    if s >= span {
                        break;
                    }
                }
            }
            let mut out = vec![0.0; n * d];
            let mut run = vec![0.0; d];
            for i in 1..=n {
                for k in 0..d {
                    run[k] += diff[i * d + k];
                    out[(i - 1) * d + k] = run[k];
                }
                if has_source {
                    let o = &mut out[(i - 1) * d..i * d];
                    for b in 0..i {
                        let (g0, g1) = (
                            &gn[(i - b) * d..(i - b + 1) * d],
                            &gn[(i - b - 1) * d..(i - b) * d],
                        );
                        let (r0, r1) = (&q0[b * dd..(b + 1) * dd], &q1[b * dd..(b + 1) * dd]);
                        // column-major d×d blocks
                        for c in 0..d {
                            for r in 0..d {
                                o[r] += r0[c * d + r] * g0[c] + r1[c * d + r] * g1[c];
                            }
                        }
                    }
                }
            }
            let inv = if size > 0 { 1.0 / size as f64 } else { 0.0 };
            out.iter_mut().for_each(|v| *v *= inv);
            Ok((size, out))
        },
    );
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let (mean, se) = mc::combine_batch_means(&parts);
    let meta = CurveMeta {
        method: format!("first_passage/{estimator}"),
        samples: opts.samples,
        seed: Some(opts.seed),
        eps: sub.eps(),
        out_of_theorem: !contraction,
    };
    let mut curve = assemble(grid, y, &mean, &se, meta)?;
    if let Some(r) = finite_right_limit(nu, a_mat, y, &gn[..d]) {
        curve = curve.with_right_limit(r);
    }
    Ok(curve)
}

/// `f(x) = Y E_{(ν),x-a}(-λ)` from one path ensemble over the whole grid.
///
/// Uniform grids go through [`solve_const`] with the `1×1` generator `-λ`,
/// which refines the cutoff near `a`; other grids use plain first passages.
pub fn solve_scalar_relaxation(
    nu: &LevyMeasure,
    lambda: f64,
    y: f64,
    grid: &[f64],
    opts: &McOptions,
) -> Result<SolutionCurve> {
    check_grid(grid)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("λ must be finite and >= 0, got {lambda}")));
    }
    if lambda > 0.0 && is_uniform(grid) {
        let gen = MatrixGenerator::new(DMatrix::from_element(1, 1, -lambda))?;
        return solve_const(nu, &gen, &DVector::from_element(1, y), None, grid, opts);
    }
    let a = grid[0];
    let zs: Vec<f64> = grid[1..].iter().map(|x| x - a).collect();
    let (mean, se, eps) = if lambda == 0.0 {
        (vec![y; zs.len()], vec![0.0; zs.len()], None)
    } else {
        let est = gen_ml_grid(nu, &zs, &[lambda], opts)?;
        let eps = est.first().and_then(|r| r[0].eps);
        (
            est.iter().map(|r| y * r[0].value).collect(),
            est.iter().map(|r| y.abs() * r[0].std_error).collect(),
            eps,
        )
    };
    let meta = CurveMeta {
        method: "first_passage".into(),
        samples: opts.samples,
        seed: Some(opts.seed),
        eps,
        out_of_theorem: false,
    };
    let yv = DVector::from_element(1, y);
    let mut curve = assemble(grid, &yv, &mean, &se, meta)?;
    if nu.is_finite() {
        let m = nu.total_mass();
        curve = curve.with_right_limit(DVector::from_element(1, y * m / (m + lambda)));
    }
    Ok(curve)
}
