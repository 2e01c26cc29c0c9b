//! Position-dependent generators `A(x)`.
//!
//! Along a path `Z_x(s) = x - S_s` that is constant on `[s_i, s_{i+1})` the
//! backward chronological exponential is
//! `T(0, t) = e^{Δ₀ A(Z(s₀))} e^{Δ₁ A(Z(s₁))} ⋯`, earliest stretch leftmost.
//! It drives the semigroup `Φ_t Y(x) = E T(0, t) Y(Z_x(t))`, the resolvent
//! `R_λ g(x) = E ∫₀^σ e^{-λs} T(0, s) g(Z_x(s)) ds` and the boundary problem
//! `f(x) = Y + E ∫₀^σ T(0, s) (A(Z) Y + g(Z)) ds`, with `σ` the exit time
//! below `a`.
//!
//! The exit functionals share one excursion per sample across the grid. Each
//! start keeps only the jumps above the cutoff that the graded sampler used
//! near its own level, so it sees an exact `ν_ε` process; see
//! `GradedSubordinator::sample_excursion_until`.

use std::collections::HashMap;

use log::warn;
use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::Serialize;

use crate::curve::{CurveMeta, SolutionCurve};
use crate::error::{invalid, Error, Result};
use crate::func::GriddedFunction;
use crate::generator::GeneratorFamily;
use crate::homogeneous::{check_grid, PathEstimator};
use crate::linalg::{exp_pair, exp_pair_static, expm};
use crate::mc::{self, McOptions, VecWelford};
use crate::measure::{LevyMeasure, Piece};
use crate::paths::{
    path_sampler, Excursion, GradedSubordinator, JumpPath, Subordinator, Truncation,
};
use crate::quad::gauss_legendre;

/// Running product `T(0, time)` along a path, currently at `position`.
#[derive(Debug, Clone)]
pub struct ChronExpAccumulator {
    product: DMatrix<f64>,
    position: f64,
    time: f64,
    a: DMatrix<f64>,
}

impl ChronExpAccumulator {
    pub fn new(dim: usize, position: f64) -> Self {
        Self {
            product: DMatrix::identity(dim, dim),
            position,
            time: 0.0,
            a: DMatrix::zeros(dim, dim),
        }
    }

    /// Stay at the current position for `duration`: `T ← T e^{duration A(position)}`.
    pub fn advance(&mut self, gen: &GeneratorFamily, duration: f64) {
        if duration <= 0.0 {
            return;
        }
        gen.eval_into(self.position, &mut self.a);
        self.a *= duration;
        self.product = &self.product * expm(&self.a);
        self.time += duration;
    }

    pub fn jump(&mut self, size: f64) {
        self.position -= size;
    }

    pub fn product(&self) -> &DMatrix<f64> {
        &self.product
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    pub fn time(&self) -> f64 {
        self.time
    }
}

/// `T(t0, t1)` along `path`.
pub fn chron_exp(path: &JumpPath, gen: &GeneratorFamily, t0: f64, t1: f64) -> Result<DMatrix<f64>> {
    if !(0.0 <= t0 && t0 <= t1 && t1 <= path.horizon) {
        return Err(invalid(format!(
            "need 0 <= t0 <= t1 <= {}, got [{t0}, {t1}]",
            path.horizon
        )));
    }
    let mut acc = ChronExpAccumulator::new(gen.dim(), path.evaluate(t0)?);
    for seg in path.segments() {
        let (lo, hi) = (seg.t0.max(t0), seg.t1.min(t1));
        if hi > lo {
            acc.position = seg.position;
            acc.advance(gen, hi - lo);
        }
    }
    Ok(acc.product)
}

/// `exp(∫_{t0}^{t1} A(Z(s)) ds)`, equal to [`chron_exp`] only for commuting families.
pub fn exp_of_integral(
    path: &JumpPath,
    gen: &GeneratorFamily,
    t0: f64,
    t1: f64,
) -> Result<DMatrix<f64>> {
    if !(0.0 <= t0 && t0 <= t1 && t1 <= path.horizon) {
        return Err(invalid(format!(
            "need 0 <= t0 <= t1 <= {}, got [{t0}, {t1}]",
            path.horizon
        )));
    }
    let d = gen.dim();
    let mut sum = DMatrix::zeros(d, d);
    for seg in path.segments() {
        let (lo, hi) = (seg.t0.max(t0), seg.t1.min(t1));
        if hi > lo {
            sum += gen.eval(seg.position) * (hi - lo);
        }
    }
    Ok(expm(&sum))
}

/// Monte Carlo estimate of a vector quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorEstimate {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
    pub samples: usize,
    pub eps: Option<f64>,
    pub out_of_theorem: bool,
}

impl VectorEstimate {
    pub fn max_std_error(&self) -> f64 {
        self.std_error.iter().copied().fold(0.0, f64::max)
    }
}

fn check_family(gen: &GeneratorFamily, d: usize, what: &str) -> Result<()> {
    if gen.dim() != d {
        return Err(invalid(format!(
            "{what} has dimension {d} but A(x) is {0}x{0}",
            gen.dim()
        )));
    }
    Ok(())
}

fn is_null(nu: &LevyMeasure) -> bool {
    nu.is_finite() && nu.total_mass() == 0.0
}

/// `Φ_t Y(x) = E T(0, t) Y(Z_x(t))`.
pub fn semigroup_apply(
    nu: &LevyMeasure,
    gen: &GeneratorFamily,
    y: &GriddedFunction,
    t: f64,
    x: f64,
    opts: &McOptions,
) -> Result<VectorEstimate> {
    let d = gen.dim();
    check_family(gen, y.dim(), "Y")?;
    if !(t >= 0.0 && t.is_finite() && x.is_finite()) {
        return Err(invalid(format!(
            "need finite t >= 0 and x, got t = {t}, x = {x}"
        )));
    }
    if is_null(nu) {
        let v = expm(&(gen.eval(x) * t)) * y.eval(x);
        return Ok(VectorEstimate {
            value: v.as_slice().to_vec(),
            std_error: vec![0.0; d],
            samples: 0,
            eps: None,
            out_of_theorem: false,
        });
    }
    if opts.samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let sub = Subordinator::pure_jump(nu, opts.truncation)?;
    let parts = mc::run_batches(
        opts.samples,
        opts.seed,
        |_, size, rng| -> Result<VecWelford> {
            let mut acc = VecWelford::new(d);
            let mut yz = DVector::zeros(d);
            for _ in 0..size {
                let path = sub.sample_path(t, x, rng)?;
                let mut ce = ChronExpAccumulator::new(d, x);
                for seg in path.segments() {
                    ce.position = seg.position;
                    ce.advance(gen, seg.duration());
                }
                y.eval_into(path.end_position(), yz.as_mut_slice());
                acc.push((ce.product() * &yz).as_slice());
            }
            Ok(acc)
        },
    );
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let w = mc::reduce_vec_welford(d, &parts);
    Ok(VectorEstimate {
        std_error: w.std_error(),
        value: w.mean,
        samples: opts.samples,
        eps: sub.truncation().eps(),
        out_of_theorem: false,
    })
}

/// `M e^{t(m + ‖ν‖(M - 1))}`, the operator-norm bound of `Φ_t` for finite ν.
pub fn semigroup_norm_bound(nu: &LevyMeasure, gen: &GeneratorFamily, t: f64) -> f64 {
    let (m_b, rate) = gen.growth();
    let extra = if m_b > 1.0 {
        nu.total_mass() * (m_b - 1.0)
    } else {
        0.0
    };
    m_b * (t * (rate + extra)).exp()
}

/// Deterministic value of `Φ_t Y(x)` from the jump-count expansion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: Vec<f64>,
    /// Bound on the omitted terms.
    pub tail_bound: f64,
    /// Highest jump count included.
    pub order: usize,
}

const SERIES_NODES: usize = 24;
const SERIES_GAUSS: usize = 24;

/// `e^{-q} Σ_{j > order} q^j / j!`.
fn poisson_tail(q: f64, order: usize) -> f64 {
    let mut term = (-q).exp();
    for j in 1..=order {
        term *= q / j as f64;
    }
    let mut sum = 0.0;
    let mut j = order;
    loop {
        j += 1;
        term *= q / j as f64;
        sum += term;
        if term < 1e-18 * sum.max(1e-300) || j > order + 10_000 {
            return sum;
        }
    }
}

/// `Φ_t Y(x) = e^{-t‖ν‖} Σ_k V_k(x, t)` for a finite measure made of atoms,
/// `V_0(p, r) = e^{rA(p)} Y(p)` and
/// `V_k(p, r) = ∫₀^r e^{sA(p)} Σ_j w_j V_{k-1}(p - y_j, r - s) ds`.
///
/// Each `V_k(p, ·)` is kept at Chebyshev-Lobatto points on `[0, t]` and the
/// `s` integrals use Gauss-Legendre. The order is the smallest one whose
/// Poisson tail bound `e^{-q} Σ_{j>M} q^j/j! · M_B ‖Y‖ e^{max(m_B, 0) t}`,
/// `q = t‖ν‖M_B`, is below `tol`.
pub fn perturbation_series(
    nu: &LevyMeasure,
    gen: &GeneratorFamily,
    y: &GriddedFunction,
    t: f64,
    x: f64,
    order_cap: usize,
    tol: f64,
) -> Result<SeriesValue> {
    let d = gen.dim();
    check_family(gen, y.dim(), "Y")?;
    if !(t >= 0.0 && t.is_finite() && x.is_finite()) {
        return Err(invalid(format!(
            "need finite t >= 0 and x, got t = {t}, x = {x}"
        )));
    }
    let mut atoms = Vec::new();
    for p in nu.pieces() {
        match p {
            Piece::Atom(a) => atoms.push((a.position, a.mass)),
            Piece::PowerLaw { .. } => {
                return Err(invalid(
                    "the perturbation series is implemented for measures made of point masses",
                ));
            }
        }
    }
    let mass: f64 = atoms.iter().map(|a| a.1).sum();
    let (m_b, rate) = gen.growth();
    let y_norm = (0..y.len())
        .map(|i| y.value(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .chain(std::iter::once(
            y.right_limit().iter().map(|v| v * v).sum::<f64>().sqrt(),
        ))
        .fold(0.0, f64::max);
    let q = t * mass * m_b;
    let scale = m_b * y_norm * (rate.max(0.0) * t).exp();
    let bound = |order: usize| poisson_tail(q, order) * scale;
    let mut order = 0;
    while bound(order) > tol {
        order += 1;
        if order > order_cap.max(1) * 4 + 400 {
            break;
        }
    }
    if order > order_cap {
        return Err(Error::TailBound {
            bound: bound(order_cap),
            tol,
            required: order,
        });
    }
    let mut series = Series::new(gen, y, &atoms, t);
    let mut value = DVector::zeros(d);
    for k in 0..=order {
        let v = series.v(k, x);
        value += &v[SERIES_NODES - 1];
    }
    value *= (-t * mass).exp();
    Ok(SeriesValue {
        value: value.as_slice().to_vec(),
        tail_bound: bound(order),
        order,
    })
}

struct Series<'a> {
    gen: &'a GeneratorFamily,
    y: &'a GriddedFunction,
    atoms: &'a [(f64, f64)],
    /// Chebyshev-Lobatto nodes on `[0, t]`, ascending.
    nodes: Vec<f64>,
    bary: Vec<f64>,
    /// Gauss-Legendre rule on `[0, 1]`.
    gauss: (Vec<f64>, Vec<f64>),
    memo: HashMap<(usize, i64), Vec<DVector<f64>>>,
    /// `e^{r_j σ_l A(p)}` per position, `j*L + l`, then `e^{r_j A(p)}` at `n*L + j`.
    exps: HashMap<i64, Vec<DMatrix<f64>>>,
}

fn pos_key(p: f64) -> i64 {
    (p * 1e12).round() as i64
}

impl<'a> Series<'a> {
    fn new(
        gen: &'a GeneratorFamily,
        y: &'a GriddedFunction,
        atoms: &'a [(f64, f64)],
        t: f64,
    ) -> Self {
        let n = SERIES_NODES;
        let nodes = (0..n)
            .map(|j| 0.5 * t * (1.0 - (std::f64::consts::PI * j as f64 / (n - 1) as f64).cos()))
            .collect();
        let bary = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let (gx, gw) = gauss_legendre(SERIES_GAUSS);
        let gauss = (
            gx.iter().map(|u| 0.5 * (u + 1.0)).collect(),
            gw.iter().map(|w| 0.5 * w).collect(),
        );
        Self {
            gen,
            y,
            atoms,
            nodes,
            bary,
            gauss,
            memo: HashMap::new(),
            exps: HashMap::new(),
        }
    }

    fn exps(&mut self, p: f64) -> &Vec<DMatrix<f64>> {
        let (gen, nodes, gauss) = (self.gen, &self.nodes, &self.gauss);
        self.exps.entry(pos_key(p)).or_insert_with(|| {
            let a = gen.eval(p);
            let mut out = Vec::with_capacity(nodes.len() * (gauss.0.len() + 1));
            for &r in nodes {
                for &u in &gauss.0 {
                    out.push(expm(&(&a * (r * u))));
                }
            }
            for &r in nodes {
                out.push(expm(&(&a * r)));
            }
            out
        })
    }

    fn interpolate(&self, vals: &[DVector<f64>], u: f64) -> DVector<f64> {
        let mut num = DVector::zeros(vals[0].len());
        let mut den = 0.0;
        for (j, (&r, &b)) in self.nodes.iter().zip(&self.bary).enumerate() {
            let diff = u - r;
            if diff.abs() < 1e-15 * (1.0 + r.abs()) {
                return vals[j].clone();
            }
            let w = b / diff;
            num.axpy(w, &vals[j], 1.0);
            den += w;
        }
        num / den
    }

    /// `V_k(p, r_j)` for all nodes.
    fn v(&mut self, k: usize, p: f64) -> Vec<DVector<f64>> {
        if let Some(v) = self.memo.get(&(k, pos_key(p))) {
            return v.clone();
        }
        let n = self.nodes.len();
        let l = self.gauss.0.len();
        let out = if k == 0 {
            let yp = self.y.eval(p);
            let ex = self.exps(p).clone();
            (0..n).map(|j| &ex[n * l + j] * &yp).collect()
        } else {
            // W(u) = Σ_j w_j V_{k-1}(p - y_j, u) at the nodes
            let d = self.gen.dim();
            let mut w = vec![DVector::zeros(d); n];
            for &(pos, mass) in self.atoms {
                let prev = self.v(k - 1, p - pos);
                for (wi, pi) in w.iter_mut().zip(&prev) {
                    wi.axpy(mass, pi, 1.0);
                }
            }
            let ex = self.exps(p).clone();
            let mut out = vec![DVector::zeros(d); n];
            for j in 1..n {
                let r = self.nodes[j];
                for li in 0..l {
                    let (u, wt) = (self.gauss.0[li], self.gauss.1[li]);
                    let wv = self.interpolate(&w, r * (1.0 - u));
                    out[j] += (&ex[j * l + li] * wv) * (r * wt);
                }
            }
            out
        };
        self.memo.insert((k, pos_key(p)), out.clone());
        out
    }
}

/// Integrand data for an exit functional
/// `E ∫₀^σ e^{-λs} T(0, s) (A(Z_s) Y + g(Z_s)) ds`.
struct ExitProblem<'a> {
    gen: &'a GeneratorFamily,
    lambda: f64,
    y: Option<&'a DVector<f64>>,
    g: Option<&'a GriddedFunction>,
    estimator: PathEstimator,
}

struct ExitWork {
    a: DMatrix<f64>,
    p: DMatrix<f64>,
    e: DMatrix<f64>,
    run: DMatrix<f64>,
    next: DMatrix<f64>,
    rhs: DVector<f64>,
    tmp: DVector<f64>,
    v: DVector<f64>,
}

impl ExitWork {
    fn new(d: usize) -> Self {
        Self {
            a: DMatrix::zeros(d, d),
            p: DMatrix::zeros(d, d),
            e: DMatrix::zeros(d, d),
            run: DMatrix::zeros(d, d),
            next: DMatrix::zeros(d, d),
            rhs: DVector::zeros(d),
            tmp: DVector::zeros(d),
            v: DVector::zeros(d),
        }
    }
}

impl ExitProblem<'_> {
    /// Adds one path's value for the start `start` and exit level `level`
    /// (`σ` = first time the kept jumps sum to `>= level`) to `out`. `kept`
    /// indexes the jumps of `ex` at or above the start's cutoff, which arrive
    /// at rate `rate`.
    #[allow(clippy::too_many_arguments)]
    fn accumulate(
        &self,
        ex: &Excursion,
        kept: &[usize],
        start: f64,
        level: f64,
        rate: f64,
        w: &mut ExitWork,
        out: &mut [f64],
    ) -> Result<()> {
        let d = out.len();
        w.run.fill_with_identity();
        let (mut t, mut s) = (0.0, 0.0);
        for &j in kept {
            let (tj, zj) = (ex.times[j], ex.sizes[j]);
            let pos = start - s;
            self.gen.eval_into(pos, &mut w.a);
            match self.y {
                Some(y) => w.a.mul_to(y, &mut w.rhs),
                None => w.rhs.fill(0.0),
            }
            if let Some(g) = self.g {
                g.eval_into(pos, w.tmp.as_mut_slice());
                w.rhs += &w.tmp;
            }
            match self.estimator {
                PathEstimator::Conditional => {
                    w.p.copy_from(&w.a);
                    w.p.neg_mut();
                    for k in 0..d {
                        w.p[(k, k)] += rate + self.lambda;
                    }
                    if !w.p.try_inverse_mut() {
                        return Err(Error::Admissibility(format!(
                            "(m + λ)I - A(x) is singular at x = {pos}"
                        )));
                    }
                    w.e.copy_from(&w.p);
                    w.e *= rate;
                }
                PathEstimator::Pathwise => {
                    for k in 0..d {
                        w.a[(k, k)] -= self.lambda;
                    }
                    let (e, p) = exp_pair(&w.a, tj - t);
                    w.e.copy_from(&e);
                    w.p.copy_from(&p);
                }
            }
            w.p.mul_to(&w.rhs, &mut w.tmp);
            w.run.mul_to(&w.tmp, &mut w.v);
            for (o, v) in out.iter_mut().zip(w.v.iter()) {
                *o += v;
            }
            if s + zj >= level {
                return Ok(());
            }
            w.run.mul_to(&w.e, &mut w.next);
            std::mem::swap(&mut w.run, &mut w.next);
            s += zj;
            t = tj;
        }
        Err(invalid(format!("excursion does not reach level {level}")))
    }

    /// [`ExitProblem::accumulate`] with stack matrices for `d = D`; `abuf` is
    /// a `D × D` scratch buffer for `A(x)`.
    #[allow(clippy::too_many_arguments)]
    fn accumulate_fixed<const D: usize>(
        &self,
        ex: &Excursion,
        kept: &[usize],
        start: f64,
        level: f64,
        rate: f64,
        abuf: &mut DMatrix<f64>,
        out: &mut [f64],
    ) -> Result<()> {
        let eye = SMatrix::<f64, D, D>::identity();
        let y = self
            .y
            .map(|y| SVector::<f64, D>::from_column_slice(y.as_slice()));
        let mut gb = SVector::<f64, D>::zeros();
        let mut run = eye;
        let (mut t, mut s) = (0.0, 0.0);
        for &j in kept {
            let (tj, zj) = (ex.times[j], ex.sizes[j]);
            let pos = start - s;
            self.gen.eval_into(pos, abuf);
            let a = SMatrix::<f64, D, D>::from_column_slice(abuf.as_slice());
            let mut rhs = match &y {
                Some(y) => a * y,
                None => SVector::zeros(),
            };
            if let Some(g) = self.g {
                g.eval_into(pos, gb.as_mut_slice());
                rhs += gb;
            }
            let (e, p) = match self.estimator {
                PathEstimator::Conditional => {
                    let p = (eye * (rate + self.lambda) - a)
                        .try_inverse()
                        .ok_or_else(|| {
                            Error::Admissibility(format!(
                                "(m + λ)I - A(x) is singular at x = {pos}"
                            ))
                        })?;
                    (p * rate, p)
                }
                PathEstimator::Pathwise => exp_pair_static(&(a - eye * self.lambda), tj - t),
            };
            let v = run * (p * rhs);
            for (o, v) in out.iter_mut().zip(v.iter()) {
                *o += v;
            }
            if s + zj >= level {
                return Ok(());
            }
            run *= e;
            s += zj;
            t = tj;
        }
        Err(invalid(format!("excursion does not reach level {level}")))
    }
}

/// A start point of an exit functional: position, distance to the boundary
/// and the index of its cutoff in the cutoff list.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Target {
    pub(crate) start: f64,
    pub(crate) level: f64,
    pub(crate) cut: usize,
}

/// Per-batch means of every target's value, `targets.len() * d` numbers.
fn exit_batches(
    sampler: &GradedSubordinator,
    cuts: &[(f64, f64)],
    targets: &[Target],
    problem: &ExitProblem,
    span: f64,
    opts: &McOptions,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let d = problem.gen.dim();
    let stop = cuts.iter().map(|c| c.0).fold(0.0, f64::max);
    let parts = mc::run_batches(
        opts.samples,
        opts.seed,
        |_, size, rng| -> Result<(usize, Vec<f64>)> {
            let mut sums = vec![0.0; targets.len() * d];
            let mut kept: Vec<Vec<usize>> = vec![Vec::new(); cuts.len()];
            let mut w = ExitWork::new(d);
            for _ in 0..size {
                let ex = sampler.sample_excursion_until(span, stop, rng)?;
                for (c, list) in cuts.iter().zip(kept.iter_mut()) {
                    list.clear();
                    list.extend(
                        ex.sizes
                            .iter()
                            .enumerate()
                            .filter(|(_, &z)| z >= c.0)
                            .map(|(i, _)| i),
                    );
                }
                for (i, tg) in targets.iter().enumerate() {
                    let out = &mut sums[i * d..(i + 1) * d];
                    let (kept, rate) = (&kept[tg.cut], cuts[tg.cut].1);
                    match d {
                        1 => problem.accumulate_fixed::<1>(
                            &ex, kept, tg.start, tg.level, rate, &mut w.a, out,
                        )?,
                        2 => problem.accumulate_fixed::<2>(
                            &ex, kept, tg.start, tg.level, rate, &mut w.a, out,
                        )?,
                        3 => problem.accumulate_fixed::<3>(
                            &ex, kept, tg.start, tg.level, rate, &mut w.a, out,
                        )?,
                        4 => problem.accumulate_fixed::<4>(
                            &ex, kept, tg.start, tg.level, rate, &mut w.a, out,
                        )?,
                        _ => {
                            problem.accumulate(&ex, kept, tg.start, tg.level, rate, &mut w, out)?
                        }
                    }
                }
            }
            let inv = if size > 0 { 1.0 / size as f64 } else { 0.0 };
            sums.iter_mut().for_each(|v| *v *= inv);
            Ok((size, sums))
        },
    );
    parts.into_iter().collect()
}

/// Cutoff list and targets for the grid points `x_1..` above `a`: each start
/// uses the cutoff the sampler applies at its own level.
pub(crate) fn graded_targets(
    sampler: &GradedSubordinator,
    a: f64,
    xs: &[f64],
) -> (Vec<(f64, f64)>, Vec<Target>) {
    let mut cuts: Vec<(f64, f64)> = Vec::new();
    let mut targets = Vec::with_capacity(xs.len());
    for &x in xs {
        let c = sampler.cutoff_at(x - a);
        let cut = match cuts.iter().position(|k| k.0 == c.0) {
            Some(i) => i,
            None => {
                cuts.push(c);
                cuts.len() - 1
            }
        };
        targets.push(Target {
            start: x,
            level: x - a,
            cut,
        });
    }
    (cuts, targets)
}

pub(crate) fn full_grid(a: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if !a.is_finite() || grid.is_empty() {
        return Err(invalid("need a finite boundary and a non-empty grid"));
    }
    if a > grid[0] {
        return Err(invalid(format!(
            "the boundary a = {a} must not exceed the first grid point {}",
            grid[0]
        )));
    }
    let mut full = Vec::with_capacity(grid.len() + 1);
    if a < grid[0] {
        full.push(a);
    }
    full.extend_from_slice(grid);
    check_grid(&full)?;
    Ok(full)
}

pub(crate) fn min_spacing(grid: &[f64]) -> f64 {
    grid.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

fn check_source(g: Option<&GriddedFunction>, d: usize) -> Result<()> {
    match g {
        Some(g) if g.dim() != d => Err(invalid(format!(
            "source term has dimension {}, expected {d}",
            g.dim()
        ))),
        _ => Ok(()),
    }
}

fn to_vectors(flat: &[f64], d: usize) -> Vec<DVector<f64>> {
    flat.chunks(d).map(DVector::from_column_slice).collect()
}

/// `(mI - A(a) + λ)^{-1}(mY + g(a))` at the right of `a` for finite ν.
fn finite_right_limit(
    nu: &LevyMeasure,
    gen: &GeneratorFamily,
    lambda: f64,
    y: &DVector<f64>,
    g: Option<&GriddedFunction>,
    a: f64,
) -> Option<DVector<f64>> {
    if !nu.is_finite() {
        return None;
    }
    let m = nu.total_mass();
    let d = y.len();
    let lhs = DMatrix::<f64>::identity(d, d) * (m + lambda) - gen.eval(a);
    let mut rhs = y * m;
    if let Some(g) = g {
        rhs += g.eval(a);
    }
    lhs.lu().solve(&rhs)
}

fn contraction_gate(gen: &GeneratorFamily, what: &str) -> bool {
    let ok = gen.is_contraction();
    if !ok {
        let (m, r) = gen.growth();
        warn!("{what}: A(x) is not a contraction (M = {m}, m = {r}); the result is outside the representation theorem");
    }
    !ok
}

/// Solution of `D^{(ν)}_{a+*} f = A(x) f + g`, `f(a) = Y`, on `grid`.
///
/// `a` is prepended to the grid when it lies below `grid[0]`.
pub fn solve_boundary(
    nu: &LevyMeasure,
    gen: &GeneratorFamily,
    y: &DVector<f64>,
    g: Option<&GriddedFunction>,
    a: f64,
    grid: &[f64],
    opts: &McOptions,
) -> Result<SolutionCurve> {
    solve_boundary_with(nu, gen, y, g, a, grid, opts, PathEstimator::default())
}

#[allow(clippy::too_many_arguments)]
pub fn solve_boundary_with(
    nu: &LevyMeasure,
    gen: &GeneratorFamily,
    y: &DVector<f64>,
    g: Option<&GriddedFunction>,
    a: f64,
    grid: &[f64],
    opts: &McOptions,
    estimator: PathEstimator,
) -> Result<SolutionCurve> {
    let d = gen.dim();
    check_family(gen, y.len(), "Y")?;
    check_source(g, d)?;
    let out_of_theorem = contraction_gate(gen, "solve_boundary");
    let problem = ExitProblem {
        gen,
        lambda: 0.0,
        y: Some(y),
        g,
        estimator,
    };
    let (grid, mean, se, eps) = exit_curve(nu, &problem, a, grid, opts)?;
    let mut values = vec![y.clone()];
    values.extend(to_vectors(&mean, d).into_iter().map(|v| v + y));
    let mut errs = vec![DVector::zeros(d)];
    errs.extend(to_vectors(&se, d));
    let meta = CurveMeta {
        method: format!("feynman_kac/{estimator}"),
        samples: opts.samples,
        seed: Some(opts.seed),
        eps,
        out_of_theorem,
    };
    let mut curve = SolutionCurve::new(grid, values, errs, meta)?;
    if let Some(r) = finite_right_limit(nu, gen, 0.0, y, g, a) {
        curve = curve.with_right_limit(r);
    }
    Ok(curve)
}

type ExitCurve = (Vec<f64>, Vec<f64>, Vec<f64>, Option<f64>);

/// Shared excursions over the grid above `a`: `(grid with a, mean, se, eps)`
/// with `mean`/`se` flat over `x_1..`.
fn exit_curve(
    nu: &LevyMeasure,
    problem: &ExitProblem,
    a: f64,
    grid: &[f64],
    opts: &McOptions,
) -> Result<ExitCurve> {
    let grid = full_grid(a, grid)?;
    if opts.samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let d = problem.gen.dim();
    let n = grid.len() - 1;
    if problem.y.is_none() && problem.g.is_none() {
        return Ok((grid, vec![0.0; n * d], vec![0.0; n * d], None));
    }
    if is_null(nu) {
        return Err(invalid(
            "the zero measure never leaves its starting point, so the exit time is infinite",
        ));
    }
    let span = grid[n] - a;
    let sampler = path_sampler(nu, opts, span, min_spacing(&grid))?;
    let (cuts, targets) = graded_targets(&sampler, a, &grid[1..]);
    let parts = exit_batches(&sampler, &cuts, &targets, problem, span, opts)?;
    let (mean, se) = mc::combine_batch_means(&parts);
    Ok((grid, mean, se, sampler.eps()))
}

/// `R_λ g(x) = E ∫₀^σ e^{-λs} T(0, s) g(Z_x(s)) ds` with `σ` the exit below `a`.
pub fn resolvent(
    nu: &LevyMeasure,
    gen: &GeneratorFamily,
    lambda: f64,
    g: &GriddedFunction,
    a: f64,
    x: f64,
    opts: &McOptions,
) -> Result<VectorEstimate> {
    if !(x > a) {
        return Err(invalid(format!("need x > a, got x = {x}, a = {a}")));
    }
    let c = resolvent_curve(nu, gen, lambda, g, a, &[a, x], opts)?;
    Ok(VectorEstimate {
        value: c.values[1].as_slice().to_vec(),
        std_error: c.std_errors[1].as_slice().to_vec(),
        samples: opts.samples,
        eps: c.meta.eps,
        out_of_theorem: c.meta.out_of_theorem,
    })
}

/// [`resolvent`] on a grid from one ensemble; the curve is `0` at `a`.
pub fn resolvent_curve(
    nu: &LevyMeasure,
    gen: &GeneratorFamily,
    lambda: f64,
    g: &GriddedFunction,
    a: f64,
    grid: &[f64],
    opts: &McOptions,
) -> Result<SolutionCurve> {
    resolvent_curve_with(nu, gen, lambda, g, a, grid, opts, PathEstimator::default())
}

#[allow(clippy::too_many_arguments)]
pub fn resolvent_curve_with(
    nu: &LevyMeasure,
    gen: &GeneratorFamily,
    lambda: f64,
    g: &GriddedFunction,
    a: f64,
    grid: &[f64],
    opts: &McOptions,
    estimator: PathEstimator,
) -> Result<SolutionCurve> {
    let d = gen.dim();
    check_source(Some(g), d)?;
    let (_, m_b) = gen.growth();
    if !(lambda.is_finite() && lambda > m_b - 1e-9) {
        return Err(Error::Admissibility(format!(
            "the resolvent needs λ > m_B; got λ = {lambda} with ‖e^{{tA(x)}}‖ <= M e^{{{m_b} t}}"
        )));
    }
    let out_of_theorem = contraction_gate(gen, "resolvent");
    let problem = ExitProblem {
        gen,
        lambda,
        y: None,
        g: Some(g),
        estimator,
    };
    let (grid, mean, se, eps) = exit_curve(nu, &problem, a, grid, opts)?;
    let mut values = vec![DVector::zeros(d)];
    values.extend(to_vectors(&mean, d));
    let mut errs = vec![DVector::zeros(d)];
    errs.extend(to_vectors(&se, d));
    let meta = CurveMeta {
        method: format!("resolvent/{estimator}"),
        samples: opts.samples,
        seed: Some(opts.seed),
        eps,
        out_of_theorem,
    };
    let mut curve = SolutionCurve::new(grid, values, errs, meta)?;
    if let Some(r) = finite_right_limit(nu, gen, lambda, &DVector::zeros(d), Some(g), a) {
        curve = curve.with_right_limit(r);
    }
    Ok(curve)
}

/// Boundary solutions at several plain cutoffs from one coupled ensemble.
#[derive(Debug, Clone)]
pub struct EpsLadder {
    /// Cutoffs in decreasing order.
    pub eps: Vec<f64>,
    pub curves: Vec<SolutionCurve>,
    /// `curves[k + 1] - curves[k]` with standard errors of the coupled difference.
    pub differences: Vec<SolutionCurve>,
}

/// [`solve_boundary`] at every cutoff of `eps`, all thinned from the same
/// `ν_{min ε}` excursions so that neighbouring curves are strongly correlated.
#[allow(clippy::too_many_arguments)]
pub fn solve_boundary_ladder(
    nu: &LevyMeasure,
    gen: &GeneratorFamily,
    y: &DVector<f64>,
    g: Option<&GriddedFunction>,
    a: f64,
    grid: &[f64],
    eps: &[f64],
    opts: &McOptions,
    estimator: PathEstimator,
) -> Result<EpsLadder> {
    let d = gen.dim();
    check_family(gen, y.len(), "Y")?;
    check_source(g, d)?;
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(invalid("the cutoff ladder needs positive finite cutoffs"));
    }
    let mut eps = eps.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    let grid = full_grid(a, grid)?;
    if opts.samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let out_of_theorem = contraction_gate(gen, "solve_boundary_ladder");
    let n = grid.len() - 1;
    let span = grid[n] - a;
    let finest = *eps.last().expect("non-empty");
    let sampler =
        GradedSubordinator::uniform(Subordinator::new(nu, Truncation::Plain { eps: finest })?)?;
    let cuts = eps
        .iter()
        .map(|&e| {
            Ok((
                e,
                Subordinator::new(nu, Truncation::Plain { eps: e })?.rate(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<Target> = (0..eps.len())
        .flat_map(|k| {
            grid[1..].iter().map(move |&x| Target {
                start: x,
                level: x - a,
                cut: k,
            })
        })
        .collect();
    let problem = ExitProblem {
        gen,
        lambda: 0.0,
        y: Some(y),
        g,
        estimator,
    };
    let parts = exit_batches(&sampler, &cuts, &targets, &problem, span, opts)?;
    let block = n * d;
    let curve_of = |k: usize, diff: bool| -> Result<SolutionCurve> {
        let sub: Vec<(usize, Vec<f64>)> = parts
            .iter()
            .map(|(size, m)| {
                let v = if diff {
                    (0..block)
                        .map(|i| m[(k + 1) * block + i] - m[k * block + i])
                        .collect()
                } else {
                    m[k * block..(k + 1) * block].to_vec()
                };
                (*size, v)
            })
            .collect();
        let (mean, se) = mc::combine_batch_means(&sub);
        let base = if diff { DVector::zeros(d) } else { y.clone() };
        let mut values = vec![base.clone()];
        values.extend(to_vectors(&mean, d).into_iter().map(|v| v + &base));
        let mut errs = vec![DVector::zeros(d)];
        errs.extend(to_vectors(&se, d));
        let e = if diff { eps[k + 1] } else { eps[k] };
        let meta = CurveMeta {
            method: format!("feynman_kac/{estimator}"),
            samples: opts.samples,
            seed: Some(opts.seed),
            eps: Some(e),
            out_of_theorem,
        };
        SolutionCurve::new(grid.clone(), values, errs, meta)
    };
    let curves = (0..eps.len())
        .map(|k| curve_of(k, false))
        .collect::<Result<Vec<_>>>()?;
    let differences = (0..eps.len() - 1)
        .map(|k| curve_of(k, true))
        .collect::<Result<Vec<_>>>()?;
    Ok(EpsLadder {
        eps,
        curves,
        differences,
    })
}

#[cfg(test)]
mod tests;
