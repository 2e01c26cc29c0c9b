//! Generator families `x ↦ A(x)` with the growth data the solvers gate on.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::{expm, log_norm2, spectral_norm};

type MatFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Constant(DMatrix<f64>),
    /// `R(ωx)ᵀ diag(d₁, d₂) R(ωx)` with `R` the rotation by angle `ωx`.
    RotationDecay {
        omega: f64,
        rates: [f64; 2],
    },
    /// `A(x) = mats[i]` for `breaks[i-1] < x <= breaks[i]`.
    Piecewise {
        breaks: Vec<f64>,
        mats: Vec<DMatrix<f64>>,
    },
    Custom(MatFn),
}

/// A square-matrix valued map together with `‖e^{tA(x)}‖₂ <= M e^{t m}`.
#[derive(Clone)]
pub struct GeneratorFamily {
    kind: Kind,
    dim: usize,
    domain: (f64, f64),
    growth_m: f64,
    growth_rate: f64,
    derivative_bound: f64,
    commuting: bool,
    label: String,
}

impl fmt::Debug for GeneratorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorFamily")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("growth", &(self.growth_m, self.growth_rate))
            .field("derivative_bound", &self.derivative_bound)
            .field("commuting", &self.commuting)
            .finish()
    }
}

const SCAN_POINTS: usize = 257;

fn check_square(a: &DMatrix<f64>) -> Result<()> {
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
    Ok(())
}

impl GeneratorFamily {
    pub fn constant(a: DMatrix<f64>) -> Result<Self> {
        check_square(&a)?;
        let dim = a.nrows();
        let m = log_norm2(&a);
        let commuting = true;
        let label = format!("constant({dim}x{dim})");
        Ok(Self {
            kind: Kind::Constant(a),
            dim,
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            growth_m: 1.0,
            growth_rate: m,
            derivative_bound: 0.0,
            commuting,
            label,
        })
    }

    /// `diag(-λ₁, …, -λ_d)`.
    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        let mut g = Self::constant(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            entries,
        )))?;
        g.label = format!("diagonal({entries:?})");
        Ok(g)
    }

    /// The 2×2 family `R(ωx)ᵀ diag(d₁, d₂) R(ωx)`; it has the eigenvalues
    /// `d₁, d₂` at every `x` but does not commute across `x` unless `ω = 0`
    /// or `d₁ = d₂`.
    pub fn rotation_decay(omega: f64, d1: f64, d2: f64) -> Result<Self> {
        if !(omega.is_finite() && d1.is_finite() && d2.is_finite()) {
            return Err(invalid("rotation-decay parameters must be finite"));
        }
        Ok(Self {
            kind: Kind::RotationDecay {
                omega,
                rates: [d1, d2],
            },
            dim: 2,
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            growth_m: 1.0,
            growth_rate: d1.max(d2),
            // ‖A'(x)‖ = |ω (d₂ - d₁)|
            derivative_bound: (omega * (d2 - d1)).abs(),
            commuting: omega == 0.0 || d1 == d2,
            label: format!("rotation({omega},{d1},{d2})"),
        })
    }

    /// Piecewise-constant table: `mats[0]` for `x <= breaks[0]`, …, the last
    /// matrix beyond the last break. `mats.len() == breaks.len() + 1`.
    pub fn piecewise(breaks: Vec<f64>, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if mats.len() != breaks.len() + 1 {
            return Err(invalid(format!(
                "{} breaks need {} matrices, got {}",
                breaks.len(),
                breaks.len() + 1,
                mats.len()
            )));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(invalid(
                "breakpoints must be finite and strictly increasing",
            ));
        }
        for m in &mats {
            check_square(m)?;
        }
        let dim = mats[0].nrows();
        if mats.iter().any(|m| m.nrows() != dim) {
            return Err(invalid("all matrices in the table must have the same size"));
        }
        let rate = mats.iter().map(log_norm2).fold(f64::NEG_INFINITY, f64::max);
        let commuting = mats.iter().all(|p| {
            mats.iter()
                .all(|q| (p * q - q * p).amax() <= 1e-14 * (1.0 + p.amax() * q.amax()))
        });
        let jumps = mats.windows(2).any(|w| w[0] != w[1]);
        Ok(Self {
            kind: Kind::Piecewise { breaks, mats },
            dim,
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            growth_m: 1.0,
            growth_rate: rate,
            derivative_bound: if jumps { f64::INFINITY } else { 0.0 },
            commuting,
            label: format!("piecewise({dim}x{dim})"),
        })
    }

    /// User map on `[lo, hi]`. Growth rate and derivative bound are scanned on
    /// a grid of the domain; override them with [`GeneratorFamily::with_growth`]
    /// and [`GeneratorFamily::with_derivative_bound`] when known analytically.
    pub fn custom<F>(dim: usize, lo: f64, hi: f64, f: F) -> Result<Self>
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("custom generator needs a finite domain lo < hi"));
        }
        let xs: Vec<f64> = (0..SCAN_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64)
            .collect();
        let mut rate = f64::NEG_INFINITY;
        let mut deriv: f64 = 0.0;
        let mut prev: Option<DMatrix<f64>> = None;
        for &x in &xs {
            let a = f(x);
            check_square(&a)?;
            if a.nrows() != dim {
                return Err(invalid(format!(
                    "custom generator returned {}x{} at x = {x}, expected {dim}x{dim}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            rate = rate.max(log_norm2(&a));
            if let Some(p) = &prev {
                deriv =
                    deriv.max(spectral_norm(&(&a - p)) / ((hi - lo) / (SCAN_POINTS - 1) as f64));
            }
            prev = Some(a);
        }
        Ok(Self {
            kind: Kind::Custom(Arc::new(f)),
            dim,
            domain: (lo, hi),
            growth_m: 1.0,
            growth_rate: rate,
            derivative_bound: deriv,
            commuting: false,
            label: "custom".into(),
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

    pub fn with_derivative_bound(mut self, bound: f64) -> Self {
        self.derivative_bound = bound;
        self
    }

    /// Declare that all `A(x)` commute.
    pub fn with_commuting(mut self, commuting: bool) -> Self {
        self.commuting = commuting;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn eval(&self, x: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        self.eval_into(x, &mut out);
        out
    }

    /// `A(x)` written into a `dim × dim` buffer.
    pub fn eval_into(&self, x: f64, out: &mut DMatrix<f64>) {
        match &self.kind {
            Kind::Constant(a) => out.copy_from(a),
            Kind::RotationDecay { omega, rates } => {
                let (s, c) = (omega * x).sin_cos();
                let (d1, d2) = (rates[0], rates[1]);
                // Rᵀ D R with R = [[c, -s], [s, c]]
                out[(0, 0)] = c * c * d1 + s * s * d2;
                out[(0, 1)] = -c * s * d1 + s * c * d2;
                out[(1, 0)] = out[(0, 1)];
                out[(1, 1)] = s * s * d1 + c * c * d2;
            }
            Kind::Piecewise { breaks, mats } => {
                out.copy_from(&mats[breaks.partition_point(|&b| b < x)])
            }
            Kind::Custom(f) => out.copy_from(&f(x)),
        }
    }

    /// True when `A(x)` does not depend on `x`.
    pub fn constant_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            Kind::Constant(a) => Some(a),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// `(M, m)` with `‖e^{tA(x)}‖₂ <= M e^{tm}`.
    pub fn growth(&self) -> (f64, f64) {
        (self.growth_m, self.growth_rate)
    }

    pub fn is_contraction(&self) -> bool {
        self.growth_m <= 1.0 && self.growth_rate <= 1e-12
    }

    pub fn derivative_bound(&self) -> f64 {
        self.derivative_bound
    }

    pub fn is_commuting(&self) -> bool {
        self.commuting
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Worst violation of the declared growth bound on sampled `(x, t)`,
    /// `max(‖e^{tA(x)}‖ / (M e^{tm})) - 1` (nonpositive when the bound holds).
    pub fn spot_check_growth(&self, xs: &[f64], ts: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for &x in xs {
            let a = self.eval(x);
            for &t in ts {
                let lhs = spectral_norm(&expm(&(&a * t)));
                worst = worst.max(lhs / (self.growth_m * (self.growth_rate * t).exp()) - 1.0);
            }
        }
        worst
    }
}
