//! Potential measures `U_λ([0, z]) = ∫₀^∞ e^{-λt} P(S_t <= z) dt` and the
//! generalized fractional integral `I g(x) = ∫₀^{x-a} g(x-y) U(dy)`.
//!
//! Monte Carlo rests on `U_λ([0, z]) = E ∫₀^T e^{-λt} dt` with
//! `T = inf{t: S_t > z}`, the time a monotone path spends in `[0, z]`.
//! For finite purely atomic ν the law of `S` is a Poisson mixture of
//! convolution powers, `U_λ = Σ_n ν^{*n} / (λ + ‖ν‖)^{n+1}`, which is summed
//! exactly.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::derivative::CaputoOperator;
use crate::error::{invalid, Error, Result};
use crate::func::{uniform_grid, GriddedFunction};
use crate::mc::{self, McOptions, Welford};
use crate::measure::{LevyMeasure, Piece};
use crate::mittag_leffler::classical_ml;
use crate::paths::Subordinator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMethod {
    ClosedForm,
    Series,
    MonteCarlo,
}

impl fmt::Display for PotentialMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ClosedForm => "closed_form",
            Self::Series => "series",
            Self::MonteCarlo => "monte_carlo",
        })
    }
}

impl FromStr for PotentialMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form" | "closed-form" => Ok(Self::ClosedForm),
            "series" => Ok(Self::Series),
            "monte_carlo" | "monte-carlo" | "mc" => Ok(Self::MonteCarlo),
            _ => Err(invalid(format!(
                "unknown potential method {s:?} (closed_form, series, monte_carlo)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: PotentialMethod,
    pub lambda: f64,
    pub z: f64,
    pub samples: usize,
    pub eps: Option<f64>,
    pub measure: String,
}

/// Number of grid points used by the Volterra march for iterated potentials.
pub const VOLTERRA_POINTS: usize = 257;

const CONV_BUDGET: usize = 200_000;

fn check_args(lambda: f64, z: f64) -> Result<()> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(invalid(format!(
            "level z must be positive and finite, got {z}"
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!(
            "λ must be finite and >= 0, got {lambda}; use the Mittag-Leffler functions for λ < 0"
        )));
    }
    Ok(())
}

/// `U^{(ν)}_λ([0, z])`.
pub fn potential_mass(
    nu: &LevyMeasure,
    lambda: f64,
    z: f64,
    method: PotentialMethod,
    opts: &McOptions,
) -> Result<PotentialEstimate> {
    check_args(lambda, z)?;
    let mut est = PotentialEstimate {
        value: 0.0,
        std_error: 0.0,
        method,
        lambda,
        z,
        samples: 0,
        eps: None,
        measure: nu.to_string(),
    };
    match method {
        PotentialMethod::ClosedForm => est.value = closed_form(nu, lambda, z)?,
        PotentialMethod::Series => est.value = atom_series(nu, lambda, z)?,
        PotentialMethod::MonteCarlo => {
            let sub = Subordinator::from_options(nu, opts.truncation)?;
            let e = monte_carlo(&sub, &[lambda], &[z], opts)?;
            est.value = e[0][0].mean;
            est.std_error = e[0][0].std_error();
            est.samples = opts.samples;
            est.eps = sub.truncation().eps();
        }
    }
    Ok(est)
}

/// Stable ν = c·stable(β): `U([0,z]) = z^β / (c Γ(1+β))` and
/// `U_λ([0,z]) = (1 - E_β(-λ z^β / c)) / λ`.
fn closed_form(nu: &LevyMeasure, lambda: f64, z: f64) -> Result<f64> {
    let LevyMeasure::StableFractional { beta, scale } = *nu else {
        return Err(invalid(format!(
            "no closed form for {nu}; only untruncated stable measures have one"
        )));
    };
    if lambda == 0.0 {
        return Ok(z.powf(beta) / (scale * gamma(1.0 + beta)));
    }
    Ok((1.0 - classical_ml(beta, -lambda * z.powf(beta) / scale)?) / lambda)
}

fn atoms_only(nu: &LevyMeasure) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for p in nu.pieces() {
        match p {
            Piece::Atom(a) => out.push((a.position, a.mass)),
            _ => {
                return Err(invalid(format!(
                    "the exact series needs a finite purely atomic measure, got {nu}"
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(invalid("the zero measure has an infinite potential"));
    }
    Ok(out)
}

/// `p_n = ν^{*n}([0, z])` for `n = 0, 1, …` until the convolution powers leave
/// `[0, z]`.
pub(crate) fn convolution_masses(atoms: &[(f64, f64)], z: f64) -> Result<Vec<f64>> {
    let tol = 1e-12 * z.max(1.0);
    let mut cur: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    let mut masses = vec![1.0];
    loop {
        let mut next: Vec<(f64, f64)> = Vec::with_capacity(cur.len() * atoms.len());
        for &(p, m) in &cur {
            for &(y, b) in atoms {
                if p + y <= z + tol {
                    next.push((p + y, m * b));
                }
            }
        }
        if next.is_empty() {
            return Ok(masses);
        }
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(next.len());
        for (p, m) in next {
            match merged.last_mut() {
                Some(last) if p - last.0 <= tol => last.1 += m,
                _ => merged.push((p, m)),
            }
        }
        if merged.len() > CONV_BUDGET {
            return Err(Error::Budget(format!(
                "more than {CONV_BUDGET} distinct jump sums below z = {z}"
            )));
        }
        masses.push(merged.iter().map(|e| e.1).sum());
        cur = merged;
    }
}

fn atom_series(nu: &LevyMeasure, lambda: f64, z: f64) -> Result<f64> {
    let atoms = atoms_only(nu)?;
    let m: f64 = atoms.iter().map(|a| a.1).sum();
    let q = lambda + m;
    Ok(convolution_masses(&atoms, z)?
        .iter()
        .enumerate()
        .map(|(n, p)| p / q.powi(n as i32 + 1))
        .sum())
}

/// Per-sample accumulators `[z][λ]` of `∫₀^T e^{-λt} dt`, `T` the strict passage.
pub(crate) fn monte_carlo(
    sub: &Subordinator,
    lambdas: &[f64],
    zs: &[f64],
    opts: &McOptions,
) -> Result<Vec<Vec<Welford>>> {
    if opts.samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let mut order: Vec<usize> = (0..zs.len()).collect();
    order.sort_by(|&i, &j| zs[i].total_cmp(&zs[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| zs[i]).collect();
    let parts = mc::run_batches(opts.samples, opts.seed, |_, n, rng| {
        let mut acc = vec![vec![Welford::default(); lambdas.len()]; zs.len()];
        let mut t = vec![0.0; zs.len()];
        for _ in 0..n {
            sub.first_passages(&sorted, true, rng, &mut t);
            for (k, &i) in order.iter().enumerate() {
                for (j, &l) in lambdas.iter().enumerate() {
                    acc[i][j].push(time_integral(l, t[k]));
                }
            }
        }
        acc
    });
    let mut out = vec![vec![Welford::default(); lambdas.len()]; zs.len()];
    for p in &parts {
        for (o, q) in out.iter_mut().zip(p) {
            for (a, b) in o.iter_mut().zip(q) {
                a.merge(b);
            }
        }
    }
    Ok(out)
}

/// `∫₀^T e^{-λt} dt`.
pub(crate) fn time_integral(lambda: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        t
    } else {
        -(-lambda * t).exp_m1() / lambda
    }
}

/// `U_λ([0, z])` on a grid of `(λ, z)` from one path ensemble; result `[z][λ]`.
pub fn potential_mass_grid(
    nu: &LevyMeasure,
    lambdas: &[f64],
    zs: &[f64],
    opts: &McOptions,
) -> Result<Vec<Vec<PotentialEstimate>>> {
    for &z in zs {
        for &l in lambdas {
            check_args(l, z)?;
        }
    }
    let sub = Subordinator::from_options(nu, opts.truncation)?;
    let acc = monte_carlo(&sub, lambdas, zs, opts)?;
    let label = nu.to_string();
    Ok(acc
        .iter()
        .zip(zs)
        .map(|(row, &z)| {
            row.iter()
                .zip(lambdas)
                .map(|(w, &lambda)| PotentialEstimate {
                    value: w.mean,
                    std_error: w.std_error(),
                    method: PotentialMethod::MonteCarlo,
                    lambda,
                    z,
                    samples: opts.samples,
                    eps: sub.truncation().eps(),
                    measure: label.clone(),
                })
                .collect()
        })
        .collect())
}

/// Outcome of the check `U₀([0,z]) <= e^{kz} / φ(k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub std_error: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `U₀([0, z]) <= e^{kz}/φ_ν(k) + 3σ`, computed exactly when possible.
pub fn check_exponential_bound(
    nu: &LevyMeasure,
    z: f64,
    k: f64,
    opts: &McOptions,
) -> Result<BoundCheck> {
    if !(k > 0.0) {
        return Err(invalid(format!("k must be positive, got {k}")));
    }
    let est = match closed_form(nu, 0.0, z) {
        Ok(v) => Ok(v),
        Err(_) => atom_series(nu, 0.0, z),
    };
    let (lhs, se) = match est {
        Ok(v) => (v, 0.0),
        Err(_) => {
            let e = potential_mass(nu, 0.0, z, PotentialMethod::MonteCarlo, opts)?;
            (e.value, e.std_error)
        }
    };
    let phi = nu.laplace_exponent(k)?;
    let rhs = if phi > 0.0 {
        (k * z).exp() / phi
    } else {
        f64::INFINITY
    };
    Ok(BoundCheck {
        lhs,
        std_error: se,
        rhs,
        holds: lhs <= rhs + 3.0 * se,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralMethod {
    /// Exact for atomic ν, otherwise the discretized Volterra equation `D h = g`.
    Deterministic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionalIntegral {
    pub value: f64,
    pub std_error: f64,
    /// `g(a) != 0`: the value is the generalized integral, which for finite ν
    /// includes the `g(a)/‖ν‖` contribution of the atom of `U` at zero.
    pub generalized: bool,
}

/// `I^{(ν)}_a g(x) = ∫₀^{x-a} g(x - y) U(dy)` for scalar `g` on a grid starting at `a`.
pub fn fractional_integral(
    nu: &LevyMeasure,
    g: &GriddedFunction,
    x: f64,
    method: IntegralMethod,
    opts: &McOptions,
) -> Result<FractionalIntegral> {
    let a = g.a();
    if !(x >= a) {
        return Err(invalid(format!("x = {x} lies left of a = {a}")));
    }
    if g.dim() != 1 {
        return Err(invalid("fractional_integral expects a scalar function"));
    }
    let generalized = g.value(0)[0] != 0.0;
    if x == a {
        return Ok(FractionalIntegral {
            value: 0.0,
            std_error: 0.0,
            generalized,
        });
    }
    let (value, std_error) = match method {
        IntegralMethod::MonteCarlo => {
            let sub = Subordinator::pure_jump(nu, opts.truncation)?;
            let w = integral_mc(&sub, g, x, opts)?;
            (w.mean, w.std_error())
        }
        IntegralMethod::Deterministic => match atoms_only(nu) {
            Ok(atoms) => (atom_integral(&atoms, g, x)?, 0.0),
            Err(_) => {
                let grid = uniform_grid(a, x, VOLTERRA_POINTS);
                let sys = CaputoOperator::new(&grid, nu)?.factor(1, None)?;
                let gn: Vec<f64> = grid.iter().map(|&t| g.eval1(t)).collect();
                let (_, h) = sys.solve(&[0.0], &gn)?;
                (h[h.len() - 1], 0.0)
            }
        },
    };
    Ok(FractionalIntegral {
        value,
        std_error,
        generalized,
    })
}

fn atom_integral(atoms: &[(f64, f64)], g: &GriddedFunction, x: f64) -> Result<f64> {
    let span = x - g.a();
    let m: f64 = atoms.iter().map(|a| a.1).sum();
    let tol = 1e-12 * span.max(1.0);
    let mut cur: Vec<(f64, f64)> = vec![(0.0, 1.0 / m)];
    let mut total = 0.0;
    while !cur.is_empty() {
        total += cur.iter().map(|&(p, w)| w * g.eval1(x - p)).sum::<f64>();
        let mut next: Vec<(f64, f64)> = Vec::new();
        for &(p, w) in &cur {
            for &(y, b) in atoms {
                if p + y <= span + tol {
                    next.push((p + y, w * b / m));
                }
            }
        }
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        cur = Vec::with_capacity(next.len());
        for (p, w) in next {
            match cur.last_mut() {
                Some(last) if p - last.0 <= tol => last.1 += w,
                _ => cur.push((p, w)),
            }
        }
        if cur.len() > CONV_BUDGET {
            return Err(Error::Budget("too many distinct jump sums".into()));
        }
    }
    Ok(total)
}

fn integral_mc(
    sub: &Subordinator,
    g: &GriddedFunction,
    x: f64,
    opts: &McOptions,
) -> Result<Welford> {
    if opts.samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let level = x - g.a();
    // run past S = level exactly so that the time spent there is counted
    let reach = level + 1e-12 * level.max(1.0);
    let mut err = None;
    let parts = mc::run_batches(opts.samples, opts.seed, |_, n, rng| {
        let mut w = Welford::default();
        for _ in 0..n {
            match sub.sample_excursion_until(reach, 0.0, rng) {
                Ok(ex) => {
                    // time spent at each position while S <= level
                    let (mut t, mut s, mut acc) = (0.0, 0.0, 0.0);
                    for (&tj, &zj) in ex.times.iter().zip(&ex.sizes) {
                        acc += (tj - t) * g.eval1(x - s);
                        t = tj;
                        s += zj;
                        if s > level {
                            break;
                        }
                    }
                    w.push(acc);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(w)
    });
    let mut total = Welford::default();
    for p in parts {
        match p {
            Ok(w) => total.merge(&w),
            Err(e) => err = Some(e),
        }
    }
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// `[(I^{(ν)}_0)^k 1](z)`.
pub fn iterated_potential_one(nu: &LevyMeasure, z: f64, k: usize) -> Result<f64> {
    Ok(iterated_potentials(nu, z, k)?[k])
}

/// `[(I^{(ν)}_0)^k 1](z)` for `k = 0..=kmax`.
///
/// Exact for stable and atomic ν; otherwise each order solves `D h_k = h_{k-1}`,
/// `h_k(0) = 0` on a uniform grid of [`VOLTERRA_POINTS`] points.
pub fn iterated_potentials(nu: &LevyMeasure, z: f64, kmax: usize) -> Result<Vec<f64>> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(invalid(format!("z must be finite and >= 0, got {z}")));
    }
    if z == 0.0 {
        let mut out = vec![0.0; kmax + 1];
        out[0] = 1.0;
        if nu.is_finite() && kmax >= 1 {
            // atom 1/‖ν‖ of U at zero
            let m = nu.total_mass();
            for (k, o) in out.iter_mut().enumerate().skip(1) {
                *o = m.powi(-(k as i32));
            }
        }
        return Ok(out);
    }
    if let LevyMeasure::StableFractional { beta, scale } = *nu {
        let l = (z.powf(beta) / scale).ln();
        return Ok((0..=kmax)
            .map(|k| {
                if k == 0 {
                    1.0
                } else {
                    (k as f64 * l - ln_gamma(1.0 + k as f64 * beta)).exp()
                }
            })
            .collect());
    }
    if let Ok(atoms) = atoms_only(nu) {
        let m: f64 = atoms.iter().map(|a| a.1).sum();
        let p = convolution_masses(&atoms, z)?;
        // I_k = Σ_n C(n+k-1, k-1) p_n / m^{n+k}
        let mut out = vec![1.0];
        for k in 1..=kmax {
            let s: f64 = p
                .iter()
                .enumerate()
                .map(|(n, &pn)| {
                    let lc =
                        ln_gamma((n + k) as f64) - ln_gamma(k as f64) - ln_gamma(n as f64 + 1.0);
                    (lc - (n + k) as f64 * m.ln()).exp() * pn
                })
                .sum();
            out.push(s);
        }
        return Ok(out);
    }
    let grid = uniform_grid(0.0, z, VOLTERRA_POINTS);
    let sys = CaputoOperator::new(&grid, nu)?.factor(1, None)?;
    let mut h = vec![1.0; grid.len()];
    let mut out = vec![1.0];
    for _ in 0..kmax {
        let (right, sol) = sys.solve(&[0.0], &h)?;
        // node 0 of the next source: the right limit is what interpolation sees
        h = sol;
        h[0] = right[0];
        out.push(h[h.len() - 1]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
