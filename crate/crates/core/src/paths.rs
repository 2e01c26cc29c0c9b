//! Piecewise-constant subordinator trajectories and passage times.
//!
//! `S(s) = Σ_{s_i ≤ s} z_i` is simulated as a compound Poisson process with
//! exponential inter-arrival times. Infinite-activity measures are replaced by
//! `ν_ε = 1_{y ≥ ε} ν`; see [`Truncation`].

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::mc::{self, exp_wait, Estimate, McOptions, Welford};
use crate::measure::{JumpSampler, LevyMeasure};

/// Omitted small-jump drift targeted by [`Truncation::auto`].
pub const DEFAULT_DRIFT_TOL: f64 = 1e-3;
/// Largest jump intensity `ν([ε, ∞))` [`Truncation::auto`] will accept for plain truncation.
pub const DEFAULT_MAX_RATE: f64 = 500.0;

/// How an infinite-activity measure is made simulable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truncation {
    /// Use ν as is (must be finite).
    None,
    /// Drop jumps below `eps`.
    Plain { eps: f64 },
    /// Drop jumps below `eps` and add their mean `∫_{(0,ε)} y ν(dy)` back as a
    /// linear drift. Only passage-time functionals accept this.
    Compensated { eps: f64 },
}

impl Truncation {
    /// Default choice: nothing for finite ν; otherwise the plain cutoff whose
    /// omitted drift is [`DEFAULT_DRIFT_TOL`], falling back to a compensated
    /// cutoff at intensity [`DEFAULT_MAX_RATE`] when that would be too costly.
    pub fn auto(nu: &LevyMeasure) -> Result<Self> {
        Self::auto_with(nu, DEFAULT_DRIFT_TOL, DEFAULT_MAX_RATE)
    }

    pub fn auto_with(nu: &LevyMeasure, drift_tol: f64, max_rate: f64) -> Result<Self> {
        if nu.is_finite() {
            return Ok(Self::None);
        }
        let eps = nu.eps_for_drift(drift_tol)?;
        if nu.tail_mass(eps) <= max_rate {
            return Ok(Self::Plain { eps });
        }
        Ok(Self::Compensated {
            eps: nu.eps_for_rate(max_rate)?,
        })
    }

    /// Plain cutoff meeting the drift tolerance, whatever the cost.
    pub fn plain_for_drift(nu: &LevyMeasure, drift_tol: f64) -> Result<Self> {
        if nu.is_finite() {
            return Ok(Self::None);
        }
        Ok(Self::Plain {
            eps: nu.eps_for_drift(drift_tol)?,
        })
    }

    /// Like [`Truncation::auto`] but never compensated: when the drift target is
    /// too expensive the cutoff is set by the intensity cap.
    pub fn auto_plain(nu: &LevyMeasure) -> Result<Self> {
        match Self::auto(nu)? {
            Self::Compensated { eps } => Ok(Self::Plain { eps }),
            t => Ok(t),
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match *self {
            Self::None => None,
            Self::Plain { eps } | Self::Compensated { eps } => Some(eps),
        }
    }
}

/// One piecewise-constant trajectory `Z_x(s) = x - S(s)` on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpPath {
    pub start: f64,
    pub horizon: f64,
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
}

/// Constant stretch of a path: `Z = position` on `[t0, t1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub position: f64,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }
}

impl JumpPath {
    pub fn new(
        start: f64,
        horizon: f64,
        jump_times: Vec<f64>,
        jump_sizes: Vec<f64>,
    ) -> Result<Self> {
        if !(horizon >= 0.0) || !start.is_finite() {
            return Err(invalid(format!(
                "bad path start {start} or horizon {horizon}"
            )));
        }
        if jump_times.len() != jump_sizes.len() {
            return Err(invalid("jump_times and jump_sizes differ in length"));
        }
        let mut prev = 0.0;
        for (&t, &z) in jump_times.iter().zip(&jump_sizes) {
            if !(t > prev && t < horizon) {
                return Err(invalid(format!(
                    "jump times must increase strictly inside (0, {horizon}), got {t}"
                )));
            }
            if !(z > 0.0 && z.is_finite()) {
                return Err(invalid(format!("jump sizes must be positive, got {z}")));
            }
            prev = t;
        }
        Ok(Self {
            start,
            horizon,
            jump_times,
            jump_sizes,
        })
    }

    /// A path without jumps.
    pub fn constant(start: f64, horizon: f64) -> Self {
        Self {
            start,
            horizon,
            jump_times: Vec::new(),
            jump_sizes: Vec::new(),
        }
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// `S(s)`, right-continuous.
    pub fn cumulative(&self, s: f64) -> f64 {
        let k = self.jump_times.partition_point(|&t| t <= s);
        self.jump_sizes[..k].iter().sum()
    }

    /// `Z_x(s)` for `0 <= s <= horizon`.
    pub fn evaluate(&self, s: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&s) {
            return Err(invalid(format!("time {s} outside [0, {}]", self.horizon)));
        }
        Ok(self.start - self.cumulative(s))
    }

    /// Position after the last jump.
    pub fn end_position(&self) -> f64 {
        self.start - self.jump_sizes.iter().sum::<f64>()
    }

    /// Constant stretches covering `[0, horizon]` in time order.
    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.jump_times.len();
        let mut pos = self.start;
        (0..=n).map(move |i| {
            let t0 = if i == 0 { 0.0 } else { self.jump_times[i - 1] };
            if i > 0 {
                pos -= self.jump_sizes[i - 1];
            }
            let t1 = if i == n {
                self.horizon
            } else {
                self.jump_times[i]
            };
            Segment {
                t0,
                t1,
                position: pos,
            }
        })
    }

    /// The same path with jumps smaller than `eps` removed.
    pub fn thin(&self, eps: f64) -> JumpPath {
        let (mut t, mut z) = (Vec::new(), Vec::new());
        for (&ti, &zi) in self.jump_times.iter().zip(&self.jump_sizes) {
            if zi >= eps {
                t.push(ti);
                z.push(zi);
            }
        }
        JumpPath {
            start: self.start,
            horizon: self.horizon,
            jump_times: t,
            jump_sizes: z,
        }
    }
}

/// A path stopped at the exit time `σ_a = inf{s : Z_x(s) <= a}`.
///
/// `path.horizon == exit_time`; the crossing jump itself is not part of
/// `path`, so every position in `path` is strictly above the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitPath {
    pub path: JumpPath,
    pub exit_time: f64,
    pub boundary: f64,
    pub crossing_jump: f64,
}

/// Raw jump record of one subordinator run, long enough to pass a level.
#[derive(Debug, Clone, PartialEq)]
pub struct Excursion {
    pub times: Vec<f64>,
    pub sizes: Vec<f64>,
}

impl Excursion {
    /// Exit path of `Z_start` across `start - level`, using only jumps `>= min_jump`.
    pub fn exit(&self, start: f64, level: f64, min_jump: f64) -> Result<ExitPath> {
        let mut path = JumpPath::constant(start, 0.0);
        let mut cum = 0.0;
        for (&t, &z) in self.times.iter().zip(&self.sizes) {
            if z < min_jump {
                continue;
            }
            if cum + z >= level {
                path.horizon = t;
                return Ok(ExitPath {
                    path,
                    exit_time: t,
                    boundary: start - level,
                    crossing_jump: z,
                });
            }
            cum += z;
            path.jump_times.push(t);
            path.jump_sizes.push(z);
        }
        Err(invalid(format!("excursion does not reach level {level}")))
    }

    /// `τ_level = inf{t: S_t >= level}` over the jumps `>= min_jump` (`+∞` if never).
    pub fn passage(&self, level: f64, min_jump: f64) -> f64 {
        let mut cum = 0.0;
        for (&t, &z) in self.times.iter().zip(&self.sizes) {
            if z >= min_jump {
                cum += z;
                if cum >= level {
                    return t;
                }
            }
        }
        f64::INFINITY
    }
}

/// A simulable subordinator: compound Poisson jumps plus optional drift.
#[derive(Debug, Clone)]
pub struct Subordinator {
    truncation: Truncation,
    sampler: JumpSampler,
    rate: f64,
    drift: f64,
}

impl Subordinator {
    pub fn new(nu: &LevyMeasure, truncation: Truncation) -> Result<Self> {
        nu.levy_condition_integral()?;
        let (finite, drift) = match truncation {
            Truncation::None => {
                if !nu.is_finite() {
                    return Err(Error::InfiniteMass);
                }
                (nu.clone(), 0.0)
            }
            Truncation::Plain { eps } => (nu.truncate(eps)?, 0.0),
            Truncation::Compensated { eps } => (nu.truncate(eps)?, nu.small_jump_drift(eps)?),
        };
        let sampler = finite.sampler()?;
        let rate = sampler.total_mass();
        Ok(Self {
            truncation,
            sampler,
            rate,
            drift,
        })
    }

    /// [`Subordinator::new`] with [`Truncation::auto`] unless overridden.
    pub fn from_options(nu: &LevyMeasure, truncation: Option<Truncation>) -> Result<Self> {
        let t = match truncation {
            Some(t) => t,
            None => Truncation::auto(nu)?,
        };
        Self::new(nu, t)
    }

    /// As [`Subordinator::from_options`] but refusing drift compensation, for
    /// estimators that need piecewise-constant paths.
    pub fn pure_jump(nu: &LevyMeasure, truncation: Option<Truncation>) -> Result<Self> {
        let t = match truncation {
            Some(t) => t,
            None => Truncation::auto_plain(nu)?,
        };
        if let Truncation::Compensated { .. } = t {
            return Err(Error::Admissibility(
                "drift-compensated truncation has no piecewise-constant paths; use a plain cutoff"
                    .into(),
            ));
        }
        Self::new(nu, t)
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    /// Jump intensity `‖ν_ε‖`.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    fn require_pure_jump(&self) -> Result<()> {
        if self.drift > 0.0 {
            Err(Error::Admissibility(
                "path sampling needs a plain truncation".into(),
            ))
        } else {
            Ok(())
        }
    }

    #[inline]
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler.sample(rng)
    }

    /// Trajectory on `[0, t]` started at `x`.
    pub fn sample_path<R: Rng + ?Sized>(&self, t: f64, x: f64, rng: &mut R) -> Result<JumpPath> {
        self.require_pure_jump()?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid(format!("horizon must be finite and >= 0, got {t}")));
        }
        let mut path = JumpPath::constant(x, t);
        let mut s = exp_wait(rng, self.rate);
        while s < t {
            path.jump_times.push(s);
            path.jump_sizes.push(self.sample_jump(rng));
            s += exp_wait(rng, self.rate);
        }
        Ok(path)
    }

    /// `S_t`, including the compensating drift if any.
    pub fn value_at<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let mut s = exp_wait(rng, self.rate);
        let mut sum = self.drift * t;
        while s < t {
            sum += self.sample_jump(rng);
            s += exp_wait(rng, self.rate);
        }
        sum
    }

    /// First passage `inf{t: S_t >= z}`, or `inf{t: S_t > z}` when `strict`.
    pub fn first_passage<R: Rng + ?Sized>(&self, z: f64, strict: bool, rng: &mut R) -> f64 {
        let mut out = [0.0];
        self.first_passages(&[z], strict, rng, &mut out);
        out[0]
    }

    /// Passage times of one trajectory over ascending `levels`.
    pub fn first_passages<R: Rng + ?Sized>(
        &self,
        levels: &[f64],
        strict: bool,
        rng: &mut R,
        out: &mut [f64],
    ) {
        debug_assert!(levels.windows(2).all(|w| w[0] <= w[1]));
        let crossed = |s: f64, z: f64| if strict { s > z } else { s >= z };
        let mut t = 0.0;
        let mut sum = 0.0;
        let mut k = 0;
        while k < levels.len() && crossed(sum, levels[k]) {
            out[k] = 0.0;
            k += 1;
        }
        while k < levels.len() {
            let wait = exp_wait(rng, self.rate);
            if self.drift > 0.0 {
                // drift may carry S over some levels before the next jump
                let end = sum + self.drift * wait;
                while k < levels.len() && crossed(end, levels[k]) && !crossed(sum, levels[k]) {
                    out[k] = t + ((levels[k] - sum) / self.drift).max(0.0);
                    k += 1;
                }
                sum = end;
            }
            t += wait;
            if !t.is_finite() {
                out[k..].iter_mut().for_each(|o| *o = f64::INFINITY);
                return;
            }
            sum += self.sample_jump(rng);
            while k < levels.len() && crossed(sum, levels[k]) {
                out[k] = t;
                k += 1;
            }
        }
    }

    /// Jump record until the jumps `>= min_jump` alone sum to at least `level`.
    pub fn sample_excursion_until<R: Rng + ?Sized>(
        &self,
        level: f64,
        min_jump: f64,
        rng: &mut R,
    ) -> Result<Excursion> {
        self.require_pure_jump()?;
        if self.rate == 0.0 {
            return Err(invalid("the zero measure never leaves its starting point"));
        }
        let mut ex = Excursion {
            times: Vec::new(),
            sizes: Vec::new(),
        };
        let (mut t, mut cum) = (0.0, 0.0);
        loop {
            t += exp_wait(rng, self.rate);
            let z = self.sample_jump(rng);
            ex.times.push(t);
            ex.sizes.push(z);
            if z >= min_jump {
                cum += z;
                if cum >= level {
                    return Ok(ex);
                }
            }
        }
    }

    pub fn sample_excursion<R: Rng + ?Sized>(&self, level: f64, rng: &mut R) -> Result<Excursion> {
        self.sample_excursion_until(level, 0.0, rng)
    }

    /// `σ_a` for the path started at `x`, with the path up to (not including) the crossing.
    pub fn exit_time<R: Rng + ?Sized>(&self, x: f64, a: f64, rng: &mut R) -> Result<ExitPath> {
        if !(a < x) {
            return Err(invalid(format!(
                "boundary a = {a} must lie below the start x = {x}"
            )));
        }
        self.sample_excursion(x - a, rng)?.exit(x, x - a, 0.0)
    }
}

/// Cap on the intensity of any refinement tier of a [`GradedSubordinator`].
pub const MAX_TIER_RATE: f64 = 1e5;

/// Pure-jump approximation whose cutoff shrinks as `S → 0`.
///
/// While `S ∈ [span 2^{-k-1}, span 2^{-k})` only jumps `>= ε_k` occur, with
/// `ε_0 = ε` and `ε_k` chosen so that the omitted drift is
/// `c(ε) 2^{-k(1-γ)}`, `γ` the boundary exponent of ν. The omitted displacement
/// before reaching a level `z` is then a fixed fraction of `z` at every scale,
/// where a single cutoff would make it dominate as `z → 0`. Below
/// `resolution` the finest tier is kept. The process is Markov with
/// state-dependent intensity and piecewise constant paths.
#[derive(Debug, Clone)]
pub struct GradedSubordinator {
    /// Lower `S` edge of every tier but the first, ascending.
    edges: Vec<f64>,
    tiers: Vec<Subordinator>,
}

impl GradedSubordinator {
    /// A single tier.
    pub fn uniform(sub: Subordinator) -> Result<Self> {
        sub.require_pure_jump()?;
        Ok(Self {
            edges: Vec::new(),
            tiers: vec![sub],
        })
    }

    pub fn graded(nu: &LevyMeasure, top: Truncation, span: f64, resolution: f64) -> Result<Self> {
        let Truncation::Plain { eps } = top else {
            return Self::uniform(Subordinator::new(nu, top)?);
        };
        if !(span > 0.0 && resolution > 0.0) {
            return Err(invalid(
                "graded cutoff needs a positive span and resolution",
            ));
        }
        let gamma = nu.boundary_exponent();
        let c_top = nu.small_jump_drift(eps)?;
        let levels = (span / resolution).log2().ceil().clamp(0.0, 40.0) as i32;
        let mut edges = Vec::new();
        let mut tiers = Vec::new();
        for k in (0..=levels).rev() {
            let mut e = nu
                .eps_for_drift(c_top * 2f64.powf(-k as f64 * (1.0 - gamma)))?
                .min(eps);
            if nu.tail_mass(e) > MAX_TIER_RATE {
                e = nu.eps_for_rate(MAX_TIER_RATE)?.min(eps);
            }
            if k < levels {
                edges.push(span * 2f64.powi(-k - 1));
            }
            tiers.push(Subordinator::new(nu, Truncation::Plain { eps: e })?);
        }
        Ok(Self { edges, tiers })
    }

    /// Tier index in effect while `S = s`.
    #[inline]
    pub fn tier(&self, s: f64) -> usize {
        self.edges.partition_point(|&b| b <= s)
    }

    pub fn tiers(&self) -> &[Subordinator] {
        &self.tiers
    }

    /// The cutoff far from the start.
    pub fn eps(&self) -> Option<f64> {
        self.tiers.last().and_then(|t| t.truncation().eps())
    }

    /// `(ε, ‖ν_ε‖)` of the tier in effect at `S = s`; `ε = 0` without truncation.
    pub fn cutoff_at(&self, s: f64) -> (f64, f64) {
        let t = &self.tiers[self.tier(s)];
        (t.truncation().eps().unwrap_or(0.0), t.rate)
    }

    /// Jump record until the jumps `>= min_jump` alone sum to at least `level`.
    ///
    /// The tier follows the sum of those kept jumps. Thinning the record to the
    /// cutoff of tier `k` (at least `min_jump`) therefore leaves an exact `ν_ε`
    /// process for as long as the kept sum stays below the upper edge of tier `k`.
    pub fn sample_excursion_until<R: Rng + ?Sized>(
        &self,
        level: f64,
        min_jump: f64,
        rng: &mut R,
    ) -> Result<Excursion> {
        if self.tiers.iter().any(|t| t.rate == 0.0) {
            return Err(invalid("the zero measure never leaves its starting point"));
        }
        let mut ex = Excursion {
            times: Vec::new(),
            sizes: Vec::new(),
        };
        let (mut t, mut kept) = (0.0, 0.0);
        loop {
            let tier = &self.tiers[self.tier(kept)];
            t += exp_wait(rng, tier.rate);
            let z = tier.sample_jump(rng);
            ex.times.push(t);
            ex.sizes.push(z);
            if z >= min_jump {
                kept += z;
                if kept >= level {
                    return Ok(ex);
                }
            }
        }
    }

    /// Trajectory on `[0, t]` started at `x`.
    pub fn sample_path<R: Rng + ?Sized>(&self, t: f64, x: f64, rng: &mut R) -> Result<JumpPath> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid(format!("horizon must be finite and >= 0, got {t}")));
        }
        let mut path = JumpPath::constant(x, t);
        let mut cum = 0.0;
        let mut s = 0.0;
        loop {
            let tier = &self.tiers[self.tier(cum)];
            s += exp_wait(rng, tier.rate);
            if s >= t {
                return Ok(path);
            }
            let z = tier.sample_jump(rng);
            path.jump_times.push(s);
            path.jump_sizes.push(z);
            cum += z;
        }
    }
}

/// Path sampler for the solvers: the plain cutoff of `opts`, refined near the
/// start unless `opts.graded` is off.
pub fn path_sampler(
    nu: &LevyMeasure,
    opts: &McOptions,
    span: f64,
    resolution: f64,
) -> Result<GradedSubordinator> {
    let top = Subordinator::pure_jump(nu, opts.truncation)?;
    if opts.graded {
        GradedSubordinator::graded(nu, top.truncation(), span, resolution)
    } else {
        GradedSubordinator::uniform(top)
    }
}

/// Trajectory of the finite measure ν on `[0, t]` started at `x`.
pub fn sample_path<R: Rng + ?Sized>(
    nu: &LevyMeasure,
    t: f64,
    x: f64,
    rng: &mut R,
) -> Result<JumpPath> {
    Subordinator::new(nu, Truncation::None)?.sample_path(t, x, rng)
}

/// `σ_a` of `Z_x` for finite ν.
pub fn exit_time<R: Rng + ?Sized>(
    nu: &LevyMeasure,
    x: f64,
    a: f64,
    rng: &mut R,
) -> Result<ExitPath> {
    Subordinator::new(nu, Truncation::None)?.exit_time(x, a, rng)
}

/// `τ_z = inf{t: S_t >= z}`; infinite measures need a truncation.
pub fn first_passage_time<R: Rng + ?Sized>(
    nu: &LevyMeasure,
    z: f64,
    rng: &mut R,
    truncation: Option<Truncation>,
) -> Result<f64> {
    if !(z > 0.0) {
        return Err(invalid(format!("passage level must be positive, got {z}")));
    }
    Ok(Subordinator::from_options(nu, truncation)?.first_passage(z, false, rng))
}

/// Monte Carlo estimate of `G(t, [0, z]) = P(S_t <= z)` with binomial error.
pub fn empirical_transition(
    nu: &LevyMeasure,
    t: f64,
    z: f64,
    opts: &McOptions,
) -> Result<Estimate> {
    if opts.samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    if !(t >= 0.0) {
        return Err(invalid(format!("time must be >= 0, got {t}")));
    }
    let sub = Subordinator::from_options(nu, opts.truncation)?;
    let parts = mc::run_batches(opts.samples, opts.seed, |_, n, rng| {
        let mut w = Welford::default();
        for _ in 0..n {
            w.push(if sub.value_at(t, rng) <= z { 1.0 } else { 0.0 });
        }
        w
    });
    let w = mc::reduce_welford(&parts);
    let p = w.mean;
    Ok(Estimate {
        value: p,
        std_error: (p * (1.0 - p) / w.count as f64).sqrt(),
        samples: w.count as usize,
    })
}

/// A reproducible set of paths sharing start and horizon.
#[derive(Debug, Clone, Serialize)]
pub struct PathEnsemble {
    pub measure: String,
    pub truncation: Truncation,
    pub seed: u64,
    pub paths: Vec<JumpPath>,
}

impl PathEnsemble {
    pub fn sample(nu: &LevyMeasure, t: f64, x: f64, opts: &McOptions) -> Result<Self> {
        let sub = Subordinator::pure_jump(nu, opts.truncation)?;
        let parts = mc::run_batches(opts.samples, opts.seed, |_, n, rng| {
            (0..n)
                .map(|_| sub.sample_path(t, x, rng))
                .collect::<Result<Vec<_>>>()
        });
        let mut paths = Vec::with_capacity(opts.samples);
        for p in parts {
            paths.extend(p?);
        }
        Ok(Self {
            measure: nu.to_string(),
            truncation: sub.truncation(),
            seed: opts.seed,
            paths,
        })
    }

    /// Mean and standard error of the jump count.
    pub fn jump_count(&self) -> Estimate {
        let mut w = Welford::default();
        self.paths.iter().for_each(|p| w.push(p.n_jumps() as f64));
        w.estimate()
    }
}
