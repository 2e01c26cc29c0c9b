use rand::Rng;

use super::{LevyMeasure, Piece};
use crate::error::{Error, Result};

/// Precomputed sampler for the normalized jump law `ν/‖ν‖` of a finite measure.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    pieces: Vec<Piece>,
    cumulative: Vec<f64>,
    total: f64,
}

impl JumpSampler {
    pub fn new(nu: &LevyMeasure) -> Result<Self> {
        let pieces = nu.pieces();
        let mut cumulative = Vec::with_capacity(pieces.len());
        let mut total = 0.0;
        for p in &pieces {
            let m = p.tail(0.0);
            if !m.is_finite() {
                return Err(Error::InfiniteMass);
            }
            total += m;
            cumulative.push(total);
        }
        Ok(Self {
            pieces,
            cumulative,
            total,
        })
    }

    /// `‖ν‖`.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Draw a jump size. Must not be called on the zero measure.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        debug_assert!(self.total > 0.0);
        let u = rng.random::<f64>() * self.total;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.pieces.len() - 1);
        sample_piece(&self.pieces[idx], rng)
    }
}

fn sample_piece<R: Rng + ?Sized>(piece: &Piece, rng: &mut R) -> f64 {
    match *piece {
        Piece::Atom(a) => a.position,
        Piece::PowerLaw {
            beta,
            tempering,
            lo,
            ..
        } => loop {
            // Pareto proposal on [lo, ∞), accepted with the tempering factor
            let u = 1.0 - rng.random::<f64>();
            let y = lo * u.powf(-1.0 / beta);
            if tempering == 0.0 || rng.random::<f64>() < (-tempering * (y - lo)).exp() {
                break y;
            }
        },
    }
}
