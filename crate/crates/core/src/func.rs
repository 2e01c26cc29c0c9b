//! Vector-valued functions sampled on a grid.

use nalgebra::DVector;

use crate::error::{invalid, Result};

/// Samples `f(x_i)` on a strictly increasing grid starting at `a = x_0`.
///
/// To the left of `a` the function is the constant `f(a)`. For jump measures
/// of finite mass solutions jump at `a`; the separate right limit `f(a+)` then
/// enters interpolation on `(a, x_1]` while `f(a)` stays the boundary value.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedFunction {
    grid: Vec<f64>,
    dim: usize,
    values: Vec<f64>,
    right_limit: Option<Vec<f64>>,
}

impl GriddedFunction {
    pub fn new(grid: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        let dim = values.first().map_or(0, |v| v.len());
        let flat: Vec<f64> = values.iter().flat_map(|v| v.iter().copied()).collect();
        if values.iter().any(|v| v.len() != dim) {
            return Err(invalid("all samples must have the same dimension"));
        }
        Self::from_flat(grid, dim, flat)
    }

    /// Row-major samples, `dim` numbers per grid point.
    pub fn from_flat(grid: Vec<f64>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() || dim == 0 {
            return Err(invalid("empty grid or zero dimension"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
            return Err(invalid("grid must be finite and strictly increasing"));
        }
        if values.len() != grid.len() * dim {
            return Err(invalid(format!(
                "expected {} values, got {}",
                grid.len() * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("function values must be finite"));
        }
        Ok(Self {
            grid,
            dim,
            values,
            right_limit: None,
        })
    }

    pub fn from_scalar(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::from_flat(grid, 1, values)
    }

    pub fn from_fn<F: Fn(f64) -> DVector<f64>>(grid: Vec<f64>, f: F) -> Result<Self> {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn from_scalar_fn<F: Fn(f64) -> f64>(grid: Vec<f64>, f: F) -> Result<Self> {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::from_scalar(grid, values)
    }

    pub fn with_right_limit(mut self, v: &[f64]) -> Result<Self> {
        if v.len() != self.dim {
            return Err(invalid("right limit has the wrong dimension"));
        }
        self.right_limit = Some(v.to_vec());
        Ok(self)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn a(&self) -> f64 {
        self.grid[0]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Sample at grid index `i`.
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values_flat(&self) -> &[f64] {
        &self.values
    }

    /// `f(a+)`, equal to `f(a)` unless set explicitly.
    pub fn right_limit(&self) -> &[f64] {
        self.right_limit.as_deref().unwrap_or_else(|| self.value(0))
    }

    pub fn has_jump_at_a(&self) -> bool {
        self.right_limit
            .as_deref()
            .is_some_and(|r| r != self.value(0))
    }

    /// Value used for interpolation at node `i` (`f(a+)` at the left end).
    pub(crate) fn node_value(&self, i: usize) -> &[f64] {
        if i == 0 {
            self.right_limit()
        } else {
            self.value(i)
        }
    }

    /// Piecewise-linear interpolation, constant `f(a)` left of `a` and constant
    /// continuation right of the last node.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let n = self.grid.len();
        if x <= self.grid[0] || n == 1 {
            out.copy_from_slice(self.value(0));
            return;
        }
        if x >= self.grid[n - 1] {
            out.copy_from_slice(self.value(n - 1));
            return;
        }
        let i = self.grid.partition_point(|&t| t <= x) - 1;
        let th = (x - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        let (l, r) = (self.node_value(i), self.value(i + 1));
        for k in 0..self.dim {
            out[k] = l[k] + th * (r[k] - l[k]);
        }
    }

    pub fn eval(&self, x: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.eval_into(x, out.as_mut_slice());
        out
    }

    /// First component at `x`.
    pub fn eval1(&self, x: f64) -> f64 {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out[0]
    }

    /// Scalar function made of component `k`.
    pub fn component(&self, k: usize) -> GriddedFunction {
        let values = (0..self.len()).map(|i| self.value(i)[k]).collect();
        GriddedFunction {
            grid: self.grid.clone(),
            dim: 1,
            values,
            right_limit: self.right_limit.as_ref().map(|r| vec![r[k]]),
        }
    }

    /// True when every sample (and the right limit) is the same vector.
    pub fn is_constant(&self) -> bool {
        let first = self.value(0);
        (1..self.len()).all(|i| self.value(i) == first) && self.right_limit() == first
    }
}

/// `n` equally spaced points from `a` to `b` inclusive.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "a uniform grid needs at least two points");
    let h = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { b } else { a + i as f64 * h })
        .collect()
}

/// True if the spacing is constant to rounding.
pub fn is_uniform(grid: &[f64]) -> bool {
    if grid.len() < 3 {
        return true;
    }
    let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    grid.windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
}
