//! Spatially homogeneous pseudo-differential generators on a periodic grid.
//!
//! For `A_t = -ψ_t(D_w)` every Fourier mode evolves on its own, so along a
//! path `Z` the Green function is the inverse DFT of
//! `exp(-∫₀^s ψ_{Z(τ)}(p) dτ)` and the solution of the boundary problem with
//! zero boundary value is
//! `f̂(t, p) = E ∫₀^σ exp(-∫₀^s ψ_{Z(τ)}(p) dτ) ĝ(Z(s), p) ds`, `Z(0) = t`.
//! The modes share the path ensemble of the grid solver in `timedep`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::homogeneous::PathEstimator;
use crate::mc::{self, McOptions};
use crate::measure::LevyMeasure;
use crate::paths::{path_sampler, JumpPath};
use crate::timedep::{full_grid, graded_targets, min_spacing};

type SymbolFn = Arc<dyn Fn(f64, f64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    /// `κ p²`
    Heat {
        kappa: f64,
    },
    /// `|p|^α`
    FracLaplace {
        alpha: f64,
    },
    /// `i c p + κ p²`
    Transport {
        speed: f64,
        damping: f64,
    },
    Custom(SymbolFn),
    /// `parts[i]` for `breaks[i-1] < t <= breaks[i]`.
    Piecewise {
        breaks: Vec<f64>,
        parts: Vec<Kind>,
    },
}

impl Kind {
    fn eval(&self, t: f64, p: f64) -> Complex64 {
        match self {
            Kind::Heat { kappa } => Complex64::new(kappa * p * p, 0.0),
            Kind::FracLaplace { alpha } => Complex64::new(p.abs().powf(*alpha), 0.0),
            Kind::Transport { speed, damping } => Complex64::new(damping * p * p, speed * p),
            Kind::Custom(f) => f(t, p),
            Kind::Piecewise { breaks, parts } => {
                parts[breaks.partition_point(|&b| b < t)].eval(t, p)
            }
        }
    }

    fn depends_on_t(&self) -> bool {
        matches!(self, Kind::Custom(_) | Kind::Piecewise { .. })
    }
}

/// `(t, p) ↦ ψ_t(p)` on the frequencies of an `n`-point grid of period `length`.
#[derive(Clone)]
pub struct SymbolFamily {
    kind: Kind,
    n: usize,
    length: f64,
    label: String,
}

impl fmt::Debug for SymbolFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymbolFamily")
            .field("label", &self.label)
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

fn check_grid_size(n: usize, length: f64) -> Result<()> {
    if n < 2 {
        return Err(invalid("the periodic grid needs at least two points"));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(invalid(format!(
            "period must be positive and finite, got {length}"
        )));
    }
    Ok(())
}

impl SymbolFamily {
    fn with_kind(kind: Kind, n: usize, length: f64, label: String) -> Result<Self> {
        check_grid_size(n, length)?;
        Ok(Self {
            kind,
            n,
            length,
            label,
        })
    }

    pub fn heat(n: usize, length: f64) -> Result<Self> {
        Self::heat_with(n, length, 1.0)
    }

    /// `κ p²`.
    pub fn heat_with(n: usize, length: f64, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(invalid(format!(
                "diffusivity must be finite and >= 0, got {kappa}"
            )));
        }
        Self::with_kind(Kind::Heat { kappa }, n, length, format!("heat({kappa})"))
    }

    pub fn frac_laplace(n: usize, length: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(invalid(format!(
                "fractional Laplacian order must lie in (0, 2], got {alpha}"
            )));
        }
        Self::with_kind(
            Kind::FracLaplace { alpha },
            n,
            length,
            format!("frac_laplace({alpha})"),
        )
    }

    /// `i c p + κ p²`; with `κ = 0` the modes are purely oscillatory.
    pub fn transport(n: usize, length: f64, speed: f64, damping: f64) -> Result<Self> {
        if !speed.is_finite() || !damping.is_finite() {
            return Err(invalid("transport parameters must be finite"));
        }
        Self::with_kind(
            Kind::Transport { speed, damping },
            n,
            length,
            format!("transport({speed}, {damping})"),
        )
    }

    pub fn custom<F>(n: usize, length: f64, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Complex64 + Send + Sync + 'static,
    {
        Self::with_kind(Kind::Custom(Arc::new(f)), n, length, "custom".into())
    }

    /// `parts[i]` on `breaks[i-1] < t <= breaks[i]`, all on the same grid.
    pub fn piecewise(breaks: Vec<f64>, parts: Vec<SymbolFamily>) -> Result<Self> {
        if parts.len() != breaks.len() + 1 {
            return Err(invalid(format!(
                "{} breaks need {} symbols, got {}",
                breaks.len(),
                breaks.len() + 1,
                parts.len()
            )));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(invalid("symbol breaks must be finite and increasing"));
        }
        let (n, length) = (parts[0].n, parts[0].length);
        if parts.iter().any(|p| p.n != n || p.length != length) {
            return Err(invalid("all pieces must live on the same grid"));
        }
        let label = format!(
            "piecewise({})",
            parts
                .iter()
                .map(|p| p.label.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
        Self::with_kind(
            Kind::Piecewise {
                breaks,
                parts: parts.into_iter().map(|p| p.kind).collect(),
            },
            n,
            length,
            label,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn depends_on_t(&self) -> bool {
        self.kind.depends_on_t()
    }

    pub fn eval(&self, t: f64, p: f64) -> Complex64 {
        self.kind.eval(t, p)
    }

    /// Angular frequency of DFT index `k`, `2π k / L` with `k` folded into `(-n/2, n/2]`.
    pub fn frequency(&self, k: usize) -> f64 {
        let n = self.n as i64;
        let k = k as i64;
        let kk = if k > n / 2 { k - n } else { k };
        2.0 * PI * kk as f64 / self.length
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.frequency(k)).collect()
    }

    /// Spatial nodes `w_j = j L / n`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| j as f64 * self.length / self.n as f64)
            .collect()
    }

    /// `Re ψ_t(p) >= 0` on all frequencies and the given `t`, and no purely
    /// oscillatory mode (`Re ψ = 0 ≠ Im ψ`).
    pub fn check_dissipative(&self, ts: &[f64]) -> Result<()> {
        let ps = self.frequencies();
        for &t in ts {
            for &p in &ps {
                let z = self.eval(t, p);
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return Err(Error::Admissibility(format!(
                        "ψ_t(p) is not finite at t = {t}, p = {p}"
                    )));
                }
                if z.re < 0.0 {
                    return Err(Error::Admissibility(format!(
                        "Re ψ_t(p) = {} < 0 at t = {t}, p = {p}; the symbol is not dissipative",
                        z.re
                    )));
                }
                if z.re == 0.0 && z.im != 0.0 {
                    return Err(Error::Admissibility(format!(
                        "ψ_t(p) = {z} is purely imaginary at t = {t}, p = {p}; oscillatory symbols need damping"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn ifft(buf: &mut [Complex64]) {
    let n = buf.len();
    FftPlanner::new().plan_fft_inverse(n).process(buf);
    let inv = 1.0 / n as f64;
    buf.iter_mut().for_each(|z| *z *= inv);
}

fn fft(buf: &mut [Complex64]) {
    FftPlanner::new().plan_fft_forward(buf.len()).process(buf);
}

/// Discrete Green function along `path` up to time `s`: the inverse DFT of
/// `exp(-∫₀^s ψ_{Z(τ)}(p_k) dτ)`, so that convolving with it applies the
/// multiplier. With `ψ ≡ 0` it is the discrete delta at `w = 0`.
pub fn green_along_path(path: &JumpPath, symbols: &SymbolFamily, s: f64) -> Result<Vec<Complex64>> {
    if !(0.0..=path.horizon).contains(&s) {
        return Err(invalid(format!("time {s} outside [0, {}]", path.horizon)));
    }
    let ps = symbols.frequencies();
    let mut expo = vec![Complex64::new(0.0, 0.0); ps.len()];
    for seg in path.segments() {
        let dt = seg.t1.min(s) - seg.t0;
        if dt <= 0.0 {
            continue;
        }
        for (e, &p) in expo.iter_mut().zip(&ps) {
            *e += symbols.eval(seg.position, p) * dt;
        }
    }
    let mut buf: Vec<Complex64> = expo.iter().map(|e| (-e).exp()).collect();
    ifft(&mut buf);
    Ok(buf)
}

/// Periodic convolution `(G ⋆ h)_j = Σ_m G_m h_{j-m}` through the DFT.
pub fn convolve(green: &[Complex64], h: &[f64]) -> Result<Vec<Complex64>> {
    if green.len() != h.len() {
        return Err(invalid("kernel and field must have the same length"));
    }
    let mut a = green.to_vec();
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft(&mut a);
    fft(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    ifft(&mut a);
    Ok(a)
}

/// A real source `g(t, w)` sampled on a `t` grid and the periodic `w` grid;
/// linear in `t` between nodes and constant beyond them.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub t: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn new(t: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if t.is_empty() || t.len() != values.len() {
            return Err(invalid("need one spatial row per time node"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("time nodes must increase strictly"));
        }
        let n = values[0].len();
        if values.iter().any(|r| r.len() != n) || values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("rows must have equal length and finite entries"));
        }
        Ok(Self { t, values })
    }

    /// `g(t, w) = h(w)·c(t)`.
    pub fn separable<F: Fn(f64) -> f64>(t: Vec<f64>, h: &[f64], c: F) -> Result<Self> {
        let values = t
            .iter()
            .map(|&s| h.iter().map(|v| v * c(s)).collect())
            .collect();
        Self::new(t, values)
    }

    pub fn n(&self) -> usize {
        self.values[0].len()
    }
}

/// Estimated field `f(t_i, w_j)` with its Fourier modes.
#[derive(Debug, Clone, Serialize)]
pub struct PsidoField {
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    /// Real part of the field, one row per `t`.
    pub values: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    /// DFT coefficients `f̂(t_i, p_k)` in FFT order.
    pub modes: Vec<Vec<Complex64>>,
    /// Standard errors of the real and imaginary parts of the modes.
    pub mode_std_errors: Vec<Vec<Complex64>>,
    /// Largest imaginary part of the physical field (rounding level for real data).
    pub max_imag: f64,
    pub samples: usize,
    pub seed: u64,
    pub eps: Option<f64>,
}

impl PsidoField {
    /// `|Σ_j |f_j|² - (1/n) Σ_k |f̂_k|²|`, relative to the energy, at row `i`.
    pub fn parseval_defect(&self, i: usize) -> f64 {
        let n = self.w.len() as f64;
        let phys: f64 = self.values[i].iter().map(|v| v * v).sum();
        let freq: f64 = self.modes[i].iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        (phys - freq).abs() / phys.max(freq).max(f64::MIN_POSITIVE)
    }
}

/// `f(t, ·) = E ∫₀^σ G^{ψ,Z}_{s,0} ⋆ g(Z(s), ·) ds` on `t_grid` above `a`
/// (prepended when below `t_grid[0]`), `f(a, ·) = 0`.
///
/// Only modes where `ĝ` does not vanish are simulated.
pub fn solve_psido(
    nu: &LevyMeasure,
    symbols: &SymbolFamily,
    g: &SpaceTimeField,
    a: f64,
    t_grid: &[f64],
    opts: &McOptions,
) -> Result<PsidoField> {
    solve_psido_with(nu, symbols, g, a, t_grid, opts, PathEstimator::default())
}

#[allow(clippy::too_many_arguments)]
pub fn solve_psido_with(
    nu: &LevyMeasure,
    symbols: &SymbolFamily,
    g: &SpaceTimeField,
    a: f64,
    t_grid: &[f64],
    opts: &McOptions,
    estimator: PathEstimator,
) -> Result<PsidoField> {
    let n = symbols.n();
    if g.n() != n {
        return Err(invalid(format!(
            "source has {} spatial points, the symbol grid {n}",
            g.n()
        )));
    }
    let grid = full_grid(a, t_grid)?;
    if opts.samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let mut check_ts = grid.clone();
    check_ts.extend_from_slice(&g.t);
    symbols.check_dissipative(&check_ts)?;
    let ps = symbols.frequencies();
    // ĝ at the source's time nodes
    let ghat: Vec<Vec<Complex64>> = g
        .values
        .iter()
        .map(|row| {
            let mut b: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft(&mut b);
            b
        })
        .collect();
    let scale = ghat.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    let active: Vec<usize> = (0..n)
        .filter(|&k| ghat.iter().any(|r| r[k].norm() > 1e-14 * scale))
        .collect();
    let nt = grid.len() - 1;
    let m = active.len();
    let span = grid[nt] - a;
    let zero_field = || PsidoField {
        t: grid.clone(),
        w: symbols.nodes(),
        values: vec![vec![0.0; n]; nt + 1],
        std_errors: vec![vec![0.0; n]; nt + 1],
        modes: vec![vec![Complex64::new(0.0, 0.0); n]; nt + 1],
        mode_std_errors: vec![vec![Complex64::new(0.0, 0.0); n]; nt + 1],
        max_imag: 0.0,
        samples: opts.samples,
        seed: opts.seed,
        eps: None,
    };
    if m == 0 {
        return Ok(zero_field());
    }
    let sampler = path_sampler(nu, opts, span, min_spacing(&grid))?;
    let (cuts, targets) = graded_targets(&sampler, a, &grid[1..]);
    let stop = cuts.iter().map(|c| c.0).fold(0.0, f64::max);
    let fixed_psi: Option<Vec<Complex64>> =
        (!symbols.depends_on_t()).then(|| active.iter().map(|&k| symbols.eval(a, ps[k])).collect());
    let ghat_at = |t: f64, out: &mut [Complex64]| {
        let i = g.t.partition_point(|&s| s <= t);
        if i == 0 || g.t.len() == 1 {
            out.iter_mut()
                .zip(&active)
                .for_each(|(o, &k)| *o = ghat[0][k]);
        } else if i == g.t.len() {
            out.iter_mut()
                .zip(&active)
                .for_each(|(o, &k)| *o = ghat[i - 1][k]);
        } else {
            let th = (t - g.t[i - 1]) / (g.t[i] - g.t[i - 1]);
            for (o, &k) in out.iter_mut().zip(&active) {
                *o = ghat[i - 1][k] + (ghat[i][k] - ghat[i - 1][k]) * th;
            }
        }
    };

    // per batch: [re, im] of each (t, active mode) mean, then the physical rows
    let parts = mc::run_batches(
        opts.samples,
        opts.seed,
        |_, size, rng| -> Result<(usize, Vec<f64>)> {
            let mut sums = vec![Complex64::new(0.0, 0.0); nt * m];
            let mut kept: Vec<Vec<usize>> = vec![Vec::new(); cuts.len()];
            let mut run = vec![Complex64::new(0.0, 0.0); m];
            let mut psi = vec![Complex64::new(0.0, 0.0); m];
            let mut gh = vec![Complex64::new(0.0, 0.0); m];
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
                    let rate = cuts[tg.cut].1;
                    run.iter_mut().for_each(|r| *r = Complex64::new(1.0, 0.0));
                    let out = &mut sums[i * m..(i + 1) * m];
                    let (mut t, mut s) = (0.0, 0.0);
                    let mut done = false;
                    for &j in &kept[tg.cut] {
                        let (tj, zj) = (ex.times[j], ex.sizes[j]);
                        let pos = tg.start - s;
                        match &fixed_psi {
                            Some(f) => psi.copy_from_slice(f),
                            None => psi
                                .iter_mut()
                                .zip(&active)
                                .for_each(|(o, &k)| *o = symbols.eval(pos, ps[k])),
                        }
                        ghat_at(pos, &mut gh);
                        for q in 0..m {
                            let (e, integral) = match estimator {
                                PathEstimator::Conditional => {
                                    let p = 1.0 / (psi[q] + rate);
                                    (p * rate, p)
                                }
                                PathEstimator::Pathwise => {
                                    let dt = tj - t;
                                    let e = (-psi[q] * dt).exp();
                                    let integral = if psi[q].norm() * dt < 1e-8 {
                                        Complex64::new(dt, 0.0)
                                    } else {
                                        (1.0 - e) / psi[q]
                                    };
                                    (e, integral)
                                }
                            };
                            out[q] += run[q] * integral * gh[q];
                            run[q] *= e;
                        }
                        if s + zj >= tg.level {
                            done = true;
                            break;
                        }
                        s += zj;
                        t = tj;
                    }
                    if !done {
                        return Err(invalid(format!(
                            "excursion does not reach level {}",
                            tg.level
                        )));
                    }
                }
            }
            let inv = if size > 0 { 1.0 / size as f64 } else { 0.0 };
            let mut flat = Vec::with_capacity(nt * (2 * m + 2 * n));
            for z in &sums {
                flat.push(z.re * inv);
                flat.push(z.im * inv);
            }
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for i in 0..nt {
                buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for (q, &k) in active.iter().enumerate() {
                    buf[k] = sums[i * m + q] * inv;
                }
                ifft(&mut buf);
                for z in &buf {
                    flat.push(z.re);
                    flat.push(z.im);
                }
            }
            Ok((size, flat))
        },
    );
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let (mean, se) = mc::combine_batch_means(&parts);
    let mut field = zero_field();
    field.eps = sampler.eps();
    let phys0 = 2 * nt * m;
    for i in 0..nt {
        for (q, &k) in active.iter().enumerate() {
            let o = 2 * (i * m + q);
            field.modes[i + 1][k] = Complex64::new(mean[o], mean[o + 1]);
            field.mode_std_errors[i + 1][k] = Complex64::new(se[o], se[o + 1]);
        }
        for j in 0..n {
            let o = phys0 + 2 * (i * n + j);
            field.values[i + 1][j] = mean[o];
            field.std_errors[i + 1][j] = se[o];
            field.max_imag = field.max_imag.max(mean[o + 1].abs());
        }
    }
    Ok(field)
}
