//! Batched, seeded Monte Carlo plumbing.
//!
//! Work of `N` samples is cut into a fixed set of batches that depends on `N`
//! only. Batch `i` draws from a ChaCha8 stream keyed by `(seed, i)`, batches run
//! in parallel and are reduced in index order, so results are bit-identical for
//! any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::paths::Truncation;

pub const MAX_BATCHES: usize = 64;

/// Sample count, master seed and (optional) truncation override shared by all
/// stochastic estimators. `truncation: None` selects [`Truncation::auto`].
///
/// `graded` lets the path solvers refine a plain cutoff near the start of each
/// path (see `GradedSubordinator`); turn it off to simulate exactly `ν_ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
    pub truncation: Option<Truncation>,
    pub graded: bool,
}

impl McOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            truncation: None,
            graded: true,
        }
    }

    pub fn with_truncation(mut self, t: Truncation) -> Self {
        self.truncation = Some(t);
        self
    }

    pub fn with_graded(mut self, graded: bool) -> Self {
        self.graded = graded;
        self
    }
}

/// Batch sizes for `n` samples: `min(n, 64)` near-equal chunks.
pub fn batch_plan(n: usize) -> Vec<usize> {
    let b = n.clamp(1, MAX_BATCHES);
    let (base, rem) = (n / b, n % b);
    (0..b).map(|i| base + usize::from(i < rem)).collect()
}

/// Independent generator for batch `batch` of the master `seed`.
pub fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    rng
}

/// Run `f(batch_index, batch_size, rng)` over the batch plan of `n` samples.
/// The returned vector is in batch order.
pub fn run_batches<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize, &mut ChaCha8Rng) -> T + Sync,
{
    batch_plan(n)
        .into_par_iter()
        .enumerate()
        .map(|(i, size)| {
            let mut rng = batch_rng(seed, i);
            f(i, size, &mut rng)
        })
        .collect()
}

/// Running mean and variance (Welford), mergeable across batches.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.mean,
            std_error: self.std_error(),
            samples: self.count as usize,
        }
    }
}

/// Componentwise [`Welford`] for vector-valued observations.
#[derive(Debug, Clone, PartialEq)]
pub struct VecWelford {
    pub count: u64,
    pub mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VecWelford {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &VecWelford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn std_error(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|s| (s / (n - 1.0) / n).sqrt()).collect()
    }
}

/// Merge per-batch accumulators in order.
pub fn reduce_welford(parts: &[Welford]) -> Welford {
    parts.iter().fold(Welford::default(), |mut acc, w| {
        acc.merge(w);
        acc
    })
}

pub fn reduce_vec_welford(dim: usize, parts: &[VecWelford]) -> VecWelford {
    parts.iter().fold(VecWelford::new(dim), |mut acc, w| {
        acc.merge(w);
        acc
    })
}

/// Pooled mean and standard error from per-batch means `(size, means)`.
///
/// The per-sample variance is estimated from the spread of the batch means,
/// `σ² ≈ Σ n_b (m_b - m)² / (B - 1)`; with a single batch the error is `NaN`.
pub fn combine_batch_means(batches: &[(usize, Vec<f64>)]) -> (Vec<f64>, Vec<f64>) {
    let dim = batches.first().map_or(0, |b| b.1.len());
    let total: usize = batches.iter().map(|b| b.0).sum();
    let mut mean = vec![0.0; dim];
    for (n, m) in batches {
        for (o, v) in mean.iter_mut().zip(m) {
            *o += *n as f64 * v / total as f64;
        }
    }
    let live = batches.iter().filter(|b| b.0 > 0).count();
    let mut se = vec![f64::NAN; dim];
    if live > 1 {
        for (k, s) in se.iter_mut().enumerate() {
            let ss: f64 = batches
                .iter()
                .map(|(n, m)| *n as f64 * (m[k] - mean[k]).powi(2))
                .sum();
            *s = (ss / (live - 1) as f64 / total as f64).sqrt();
        }
    }
    (mean, se)
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Exponential waiting time with the given rate (`+∞` for rate zero).
pub(crate) fn exp_wait<R: rand::Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    -(-rng.random::<f64>()).ln_1p() / rate
}
