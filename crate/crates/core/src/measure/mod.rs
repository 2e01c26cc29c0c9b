//! Jump measures of Lévy subordinators.
//!
//! A [`LevyMeasure`] is kept symbolically (so it can be printed, parsed and
//! recorded in manifests) and flattened on demand into [`Piece`]s: point
//! masses and power-law densities `k·e^{-θy}·y^{-1-β}` restricted to
//! `(lo, ∞)`. Every analytic functional is evaluated piece by piece.
//!
//! Stable normalization: `StableFractional { beta, scale: c }` has density
//! `c·(-1/Γ(-β))·y^{-1-β}`, hence Laplace exponent `c·λ^β` and potential
//! `U([0, z]) = z^β / (c·Γ(1 + β))`.

mod parse;
mod sampler;

use std::fmt;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad::{self, QuadConfig};

pub use parse::parse_measure;
pub use sampler::JumpSampler;

/// Point mass `mass·δ_position`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub mass: f64,
}

/// Jump measure on `(0, ∞)` satisfying `∫ min(1, y) ν(dy) < ∞`.
#[derive(Debug, Clone, PartialEq)]
pub enum LevyMeasure {
    StableFractional {
        beta: f64,
        scale: f64,
    },
    TemperedStable {
        beta: f64,
        tempering: f64,
        scale: f64,
    },
    FiniteDiscrete {
        atoms: Vec<Atom>,
    },
    /// `Σ_j weight_j · StableFractional(beta_j, 1)`.
    StableMixture {
        components: Vec<(f64, f64)>,
    },
    Truncated {
        base: Box<LevyMeasure>,
        cutoff: f64,
    },
    Sum(Vec<LevyMeasure>),
}

/// Flattened building block of a measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    Atom(Atom),
    /// Density `coef · e^{-tempering·y} · y^{-1-beta}` on `(lo, ∞)`.
    PowerLaw {
        coef: f64,
        beta: f64,
        tempering: f64,
        lo: f64,
    },
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidMeasure(format!(
            "stability index must lie in (0, 1), got {beta}"
        )))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidMeasure(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// `-1/Γ(-β) = β/Γ(1-β)`.
pub(crate) fn stable_coef(beta: f64) -> f64 {
    beta / gamma(1.0 - beta)
}

fn strict_quad() -> QuadConfig {
    QuadConfig {
        abs_tol: 1e-15,
        rel_tol: 1e-10,
        max_intervals: 4000,
    }
}

impl LevyMeasure {
    pub fn stable(beta: f64, scale: f64) -> Result<Self> {
        check_beta(beta)?;
        check_positive("scale", scale)?;
        Ok(Self::StableFractional { beta, scale })
    }

    pub fn tempered(beta: f64, tempering: f64, scale: f64) -> Result<Self> {
        check_beta(beta)?;
        check_positive("scale", scale)?;
        if !(tempering >= 0.0 && tempering.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "tempering must be >= 0, got {tempering}"
            )));
        }
        Ok(Self::TemperedStable {
            beta,
            tempering,
            scale,
        })
    }

    /// Atoms given as `(position, mass)` pairs. An empty list is the zero measure.
    pub fn atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        let mut out = Vec::with_capacity(atoms.len());
        for &(position, mass) in atoms {
            check_positive("atom position", position)?;
            check_positive("atom mass", mass)?;
            out.push(Atom { position, mass });
        }
        Ok(Self::FiniteDiscrete { atoms: out })
    }

    /// Mixture `Σ weight_j · stable(beta_j, 1)` from `(beta_j, weight_j)` pairs.
    pub fn mixture(components: &[(f64, f64)]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMeasure(
                "mixture needs at least one component".into(),
            ));
        }
        for &(beta, weight) in components {
            check_beta(beta)?;
            check_positive("mixture weight", weight)?;
        }
        Ok(Self::StableMixture {
            components: components.to_vec(),
        })
    }

    pub fn sum(parts: Vec<LevyMeasure>) -> Self {
        Self::Sum(parts)
    }

    /// The zero measure (no jumps at all).
    pub fn zero() -> Self {
        Self::FiniteDiscrete { atoms: Vec::new() }
    }

    /// `ν_ε(dy) = 1_{y ≥ ε} ν(dy)`.
    pub fn truncate(&self, cutoff: f64) -> Result<Self> {
        check_positive("truncation cutoff", cutoff)?;
        Ok(match self {
            Self::FiniteDiscrete { atoms } => Self::FiniteDiscrete {
                atoms: atoms
                    .iter()
                    .copied()
                    .filter(|a| a.position >= cutoff)
                    .collect(),
            },
            Self::Truncated { base, cutoff: c0 } => Self::Truncated {
                base: base.clone(),
                cutoff: c0.max(cutoff),
            },
            Self::Sum(parts) => Self::Sum(
                parts
                    .iter()
                    .map(|p| p.truncate(cutoff))
                    .collect::<Result<_>>()?,
            ),
            other => Self::Truncated {
                base: Box::new(other.clone()),
                cutoff,
            },
        })
    }

    /// Flatten into point masses and power-law densities.
    pub fn pieces(&self) -> Vec<Piece> {
        let mut out = Vec::new();
        self.push_pieces(0.0, &mut out);
        out
    }

    fn push_pieces(&self, lo: f64, out: &mut Vec<Piece>) {
        match self {
            Self::StableFractional { beta, scale } => out.push(Piece::PowerLaw {
                coef: scale * stable_coef(*beta),
                beta: *beta,
                tempering: 0.0,
                lo,
            }),
            Self::TemperedStable {
                beta,
                tempering,
                scale,
            } => out.push(Piece::PowerLaw {
                coef: scale * stable_coef(*beta),
                beta: *beta,
                tempering: *tempering,
                lo,
            }),
            Self::FiniteDiscrete { atoms } => out.extend(
                atoms
                    .iter()
                    .filter(|a| a.position >= lo)
                    .map(|a| Piece::Atom(*a)),
            ),
            Self::StableMixture { components } => {
                for &(beta, weight) in components {
                    out.push(Piece::PowerLaw {
                        coef: weight * stable_coef(beta),
                        beta,
                        tempering: 0.0,
                        lo,
                    });
                }
            }
            Self::Truncated { base, cutoff } => base.push_pieces(lo.max(*cutoff), out),
            Self::Sum(parts) => parts.iter().for_each(|p| p.push_pieces(lo, out)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pieces().iter().all(|p| match p {
            Piece::Atom(_) => true,
            Piece::PowerLaw { lo, .. } => *lo > 0.0,
        })
    }

    /// `‖ν‖ = ν((0, ∞))`, `+∞` for infinite-activity measures.
    pub fn total_mass(&self) -> f64 {
        self.tail_mass(0.0)
    }

    /// `ν([y, ∞))`.
    pub fn tail_mass(&self, y: f64) -> f64 {
        self.pieces().iter().map(|p| p.tail(y)).sum()
    }

    /// `∫ min(1, y) ν(dy)`; rejects the measure if the value is not finite.
    pub fn levy_condition_integral(&self) -> Result<f64> {
        let mut total = 0.0;
        for p in self.pieces() {
            total += match p {
                Piece::Atom(a) => a.mass * a.position.min(1.0),
                Piece::PowerLaw {
                    coef,
                    beta,
                    tempering: 0.0,
                    lo,
                } => {
                    let near = if lo < 1.0 {
                        coef * (1.0 - lo.powf(1.0 - beta)) / (1.0 - beta)
                    } else {
                        0.0
                    };
                    near + coef * lo.max(1.0).powf(-beta) / beta
                }
                piece => piece.integrate(|y| y.min(1.0), 0.0, f64::INFINITY)?,
            };
        }
        if !total.is_finite() || total > 1e12 {
            return Err(Error::InvalidMeasure(format!(
                "Lévy condition integral diverges ({total})"
            )));
        }
        Ok(total)
    }

    /// Laplace exponent `φ(λ) = ∫ (1 - e^{-λy}) ν(dy)`.
    pub fn laplace_exponent(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Laplace exponent needs λ >= 0, got {lambda}"
            )));
        }
        if lambda == 0.0 {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for p in self.pieces() {
            total += match p {
                Piece::Atom(a) => -a.mass * (-lambda * a.position).exp_m1(),
                Piece::PowerLaw {
                    coef,
                    beta,
                    tempering,
                    lo,
                } => {
                    // full power-law piece in closed form, minus the truncated part
                    let full = coef * gamma(1.0 - beta) / beta
                        * ((lambda + tempering).powf(beta) - tempering.powf(beta));
                    if lo > 0.0 {
                        let cut = Piece::PowerLaw {
                            coef,
                            beta,
                            tempering,
                            lo: 0.0,
                        }
                        .integrate(|y| -(-lambda * y).exp_m1(), 0.0, lo)?;
                        full - cut
                    } else {
                        full
                    }
                }
            };
        }
        Ok(total)
    }

    /// `∫_{(0, ε)} y ν(dy)`, the drift carried by jumps smaller than `ε`.
    pub fn small_jump_drift(&self, eps: f64) -> Result<f64> {
        let mut total = 0.0;
        for p in self.pieces() {
            total += match p {
                Piece::Atom(a) if a.position < eps => a.mass * a.position,
                Piece::Atom(_) => 0.0,
                Piece::PowerLaw { lo, .. } if lo >= eps => 0.0,
                Piece::PowerLaw {
                    coef,
                    beta,
                    tempering: 0.0,
                    lo,
                } => coef * (eps.powf(1.0 - beta) - lo.powf(1.0 - beta)) / (1.0 - beta),
                piece => piece.integrate(|y| y, 0.0, eps)?,
            };
        }
        Ok(total)
    }

    /// `∫_{[lo, hi)} y ν(dy)`.
    pub fn first_moment_between(&self, lo: f64, hi: f64) -> Result<f64> {
        Ok(self.small_jump_drift(hi)? - self.small_jump_drift(lo)?)
    }

    /// Largest cutoff `ε` with `∫_{(0,ε)} y ν(dy) <= tol` (bisection on a log scale).
    pub fn eps_for_drift(&self, tol: f64) -> Result<f64> {
        check_positive("drift tolerance", tol)?;
        let (mut lo, mut hi) = (1e-300_f64, 1.0_f64);
        if self.small_jump_drift(hi)? <= tol {
            // grow until the drift bound is reached, capped at 1e6
            while hi < 1e6 && self.small_jump_drift(hi * 2.0)? <= tol {
                hi *= 2.0;
            }
            return Ok(hi);
        }
        for _ in 0..200 {
            let mid = (lo.ln() * 0.5 + hi.ln() * 0.5).exp();
            if self.small_jump_drift(mid)? <= tol {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo < 1.0 + 1e-12 {
                break;
            }
        }
        Ok(lo)
    }

    /// Smallest cutoff `ε` with `ν([ε, ∞)) <= rate`.
    pub fn eps_for_rate(&self, rate: f64) -> Result<f64> {
        check_positive("jump rate", rate)?;
        let (mut lo, mut hi) = (1e-300_f64, 1e6_f64);
        if self.tail_mass(lo) <= rate {
            return Ok(lo);
        }
        for _ in 0..200 {
            let mid = (lo.ln() * 0.5 + hi.ln() * 0.5).exp();
            if self.tail_mass(mid) <= rate {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi / lo < 1.0 + 1e-12 {
                break;
            }
        }
        Ok(hi)
    }

    /// Lebesgue density of the continuous part at `y > 0`.
    pub fn density(&self, y: f64) -> f64 {
        self.pieces().iter().map(|p| p.density(y)).sum()
    }

    /// A fractional lower bound `ν(dy) >= C·(-1/Γ(-β))·y^{-1-β} dy`, as `(β, C)`.
    ///
    /// Derived from untruncated stable components; when several exist the one
    /// with the largest index is reported.
    pub fn stable_lower_bound(&self) -> Option<(f64, f64)> {
        match self {
            Self::StableFractional { beta, scale } => Some((*beta, *scale)),
            Self::StableMixture { components } => components
                .iter()
                .copied()
                .max_by(|a, b| a.0.total_cmp(&b.0)),
            Self::Sum(parts) => parts
                .iter()
                .filter_map(|p| p.stable_lower_bound())
                .max_by(|a, b| a.0.total_cmp(&b.0)),
            _ => None,
        }
    }

    /// Exponent `γ` with `U([0, z]) ~ z^γ` as `z → 0`: the largest index among
    /// untruncated power-law pieces, `1` for finite measures.
    pub fn boundary_exponent(&self) -> f64 {
        self.pieces()
            .iter()
            .filter_map(|p| match p {
                Piece::PowerLaw { beta, lo, .. } if *lo == 0.0 => Some(*beta),
                _ => None,
            })
            .fold(None, |acc: Option<f64>, b| {
                Some(acc.map_or(b, |a| a.max(b)))
            })
            .unwrap_or(1.0)
    }

    /// Sampler for `ν/‖ν‖`; fails on infinite measures.
    pub fn sampler(&self) -> Result<JumpSampler> {
        JumpSampler::new(self)
    }

    /// One draw from `ν/‖ν‖`.
    pub fn sample_jump<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let s = self.sampler()?;
        if s.total_mass() == 0.0 {
            return Err(Error::InvalidArgument(
                "cannot sample from the zero measure".into(),
            ));
        }
        Ok(s.sample(rng))
    }

    /// `∫ f dν` over `[lo, hi)` (any `f` with `f(y) = O(y)` when `lo = 0` and the
    /// measure has infinite activity).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> Result<f64> {
        let mut total = 0.0;
        for p in self.pieces() {
            total += p.integrate(&f, lo, hi)?;
        }
        Ok(total)
    }
}

impl Piece {
    pub fn density(&self, y: f64) -> f64 {
        match *self {
            Piece::Atom(_) => 0.0,
            Piece::PowerLaw {
                coef,
                beta,
                tempering,
                lo,
            } => {
                if y > lo && y > 0.0 {
                    coef * (-tempering * y).exp() * y.powf(-1.0 - beta)
                } else {
                    0.0
                }
            }
        }
    }

    /// `ν([y, ∞))` for this piece.
    pub fn tail(&self, y: f64) -> f64 {
        match *self {
            Piece::Atom(a) => {
                if a.position >= y {
                    a.mass
                } else {
                    0.0
                }
            }
            Piece::PowerLaw {
                coef,
                beta,
                tempering,
                lo,
            } => {
                let from = y.max(lo);
                if from <= 0.0 {
                    return f64::INFINITY;
                }
                if tempering == 0.0 {
                    coef * from.powf(-beta) / beta
                } else {
                    self.integrate(|_| 1.0, from, f64::INFINITY)
                        .unwrap_or(f64::NAN)
                }
            }
        }
    }

    /// `∫_{[p, q)} f(y) ν(dy)` for this piece, adaptive quadrature on the
    /// power-law substitutions `y = b·v^{1/(1-β)}` near zero and
    /// `y = u^{-1/β}` beyond one.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, p: f64, q: f64) -> Result<f64> {
        match *self {
            Piece::Atom(a) => Ok(if a.position >= p && a.position < q {
                a.mass * f(a.position)
            } else {
                0.0
            }),
            Piece::PowerLaw {
                coef,
                beta,
                tempering,
                lo,
            } => {
                let p = p.max(lo);
                if p >= q {
                    return Ok(0.0);
                }
                let cfg = strict_quad();
                let mut total = 0.0;
                if p < 1.0 {
                    let b = q.min(1.0);
                    let expo = 1.0 / (1.0 - beta);
                    let v0 = if p > 0.0 {
                        (p / b).powf(1.0 - beta)
                    } else {
                        0.0
                    };
                    let g = |v: f64| {
                        let y = b * v.powf(expo);
                        if y <= 0.0 {
                            return 0.0;
                        }
                        f(y) / y * (-tempering * y).exp()
                    };
                    total +=
                        coef * b.powf(1.0 - beta) * expo * quad::integrate(g, v0, 1.0, cfg)?.value;
                }
                if q > 1.0 {
                    let start = p.max(1.0);
                    let u_hi = start.powf(-beta);
                    let u_lo = if q.is_finite() { q.powf(-beta) } else { 0.0 };
                    let g = |u: f64| {
                        if u <= 0.0 {
                            return 0.0;
                        }
                        let y = u.powf(-1.0 / beta);
                        let w = (-tempering * y).exp();
                        if w == 0.0 {
                            0.0
                        } else {
                            f(y) * w
                        }
                    };
                    total += coef / beta * quad::integrate(g, u_lo, u_hi, cfg)?.value;
                }
                Ok(total)
            }
        }
    }
}

impl fmt::Display for LevyMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StableFractional { beta, scale } => write!(f, "stable(beta={beta},c={scale})"),
            Self::TemperedStable {
                beta,
                tempering,
                scale,
            } => {
                write!(f, "tempered(beta={beta},theta={tempering},c={scale})")
            }
            Self::FiniteDiscrete { atoms } => {
                write!(f, "atoms[")?;
                for (i, a) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "({},{})", a.position, a.mass)?;
                }
                write!(f, "]")
            }
            Self::StableMixture { components } => {
                write!(f, "mix(")?;
                for (i, (beta, w)) in components.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{w}*stable(beta={beta})")?;
                }
                write!(f, ")")
            }
            Self::Truncated { base, cutoff } => write!(f, "trunc({base},eps={cutoff})"),
            Self::Sum(parts) => {
                write!(f, "sum(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl std::str::FromStr for LevyMeasure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_measure(s)
    }
}

#[cfg(test)]
mod tests;
