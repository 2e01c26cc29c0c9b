//! Solver output: vector samples with error bars on a grid.

use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::func::GriddedFunction;

/// How a curve was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub method: String,
    pub samples: usize,
    pub seed: Option<u64>,
    pub eps: Option<f64>,
    /// Set when a hypothesis of the underlying representation was violated.
    pub out_of_theorem: bool,
}

/// `f` on `grid` starting at `a`, with `f(a) = Y` and per-point standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionCurve {
    pub grid: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    pub std_errors: Vec<DVector<f64>>,
    /// `f(a+)` when the solution jumps at `a` (finite ν).
    pub right_limit: Option<DVector<f64>>,
    pub meta: CurveMeta,
}

impl SolutionCurve {
    pub fn new(
        grid: Vec<f64>,
        values: Vec<DVector<f64>>,
        std_errors: Vec<DVector<f64>>,
        meta: CurveMeta,
    ) -> Result<Self> {
        if grid.is_empty() || values.len() != grid.len() || std_errors.len() != grid.len() {
            return Err(invalid(
                "grid, values and errors must have the same non-zero length",
            ));
        }
        let d = values[0].len();
        if values.iter().chain(&std_errors).any(|v| v.len() != d) {
            return Err(invalid("inconsistent curve dimension"));
        }
        Ok(Self {
            grid,
            values,
            std_errors,
            right_limit: None,
            meta,
        })
    }

    pub fn with_right_limit(mut self, r: DVector<f64>) -> Self {
        self.right_limit = Some(r);
        self
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn a(&self) -> f64 {
        self.grid[0]
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn max_std_error(&self) -> f64 {
        self.std_errors
            .iter()
            .flat_map(|v| v.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn to_gridded(&self) -> Result<GriddedFunction> {
        let f = GriddedFunction::new(self.grid.clone(), self.values.clone())?;
        match &self.right_limit {
            Some(r) => f.with_right_limit(r.as_slice()),
            None => Ok(f),
        }
    }

    /// CSV with header `x,f0..,se0..`; a right limit is written as a second
    /// row at `x = a`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let d = self.dim();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["x".to_string()];
        header.extend((0..d).map(|k| format!("f{k}")));
        header.extend((0..d).map(|k| format!("se{k}")));
        out.write_record(&header).map_err(io_err)?;
        let mut row = |x: f64, v: &DVector<f64>, s: &DVector<f64>| {
            let mut rec = vec![fmt_num(x)];
            rec.extend(v.iter().map(|&t| fmt_num(t)));
            rec.extend(s.iter().map(|&t| fmt_num(t)));
            out.write_record(&rec).map_err(io_err)
        };
        row(self.grid[0], &self.values[0], &self.std_errors[0])?;
        if let Some(r) = &self.right_limit {
            row(self.grid[0], r, &DVector::zeros(d))?;
        }
        for i in 1..self.len() {
            row(self.grid[i], &self.values[i], &self.std_errors[i])?;
        }
        out.flush()
            .map_err(|e| Error::InvalidArgument(format!("write failed: {e}")))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers().map_err(io_err)?.clone();
        let ncol = header.len();
        if ncol < 3 || ncol % 2 == 0 || &header[0] != "x" {
            return Err(invalid("curve CSV needs the columns x,f0..,se0.."));
        }
        let d = (ncol - 1) / 2;
        let mut rows: Vec<(f64, DVector<f64>, DVector<f64>)> = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(io_err)?;
            if rec.len() != ncol {
                return Err(invalid(format!(
                    "row {} has {} fields, expected {ncol}",
                    line + 2,
                    rec.len()
                )));
            }
            let nums = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| invalid(format!("row {}: not a number: {s:?}", line + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push((
                nums[0],
                DVector::from_row_slice(&nums[1..=d]),
                DVector::from_row_slice(&nums[d + 1..]),
            ));
        }
        if rows.is_empty() {
            return Err(invalid("curve CSV has no rows"));
        }
        let mut right = None;
        if rows.len() > 1 && rows[1].0 == rows[0].0 {
            right = Some(rows.remove(1).1);
        }
        let grid = rows.iter().map(|r| r.0).collect();
        let values = rows.iter().map(|r| r.1.clone()).collect();
        let errs = rows.into_iter().map(|r| r.2).collect();
        let mut c = Self::new(grid, values, errs, CurveMeta::default())?;
        c.right_limit = right;
        Ok(c)
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("CSV: {e}"))
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}
