//! Text forms of grids, vectors, matrices, generator families, symbols and sources.

use std::f64::consts::PI;
use std::path::Path;

use genfrac_core::func::uniform_grid;
use genfrac_core::{GeneratorFamily, SymbolFamily};
use nalgebra::{DMatrix, DVector};

use crate::CliError;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn number(s: &str, what: &str) -> Result<f64, CliError> {
    let t = s.trim();
    match t {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => t
            .parse::<f64>()
            .map_err(|_| usage(format!("{what}: {t:?} is not a number"))),
    }
}

pub fn list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| number(p, what))
        .collect()
}

/// `a:b:n` for `n` uniform points, or an explicit increasing list.
pub fn grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let g = match parts.as_slice() {
        [a, b, n] => {
            let (a, b) = (number(a, "grid")?, number(b, "grid")?);
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| usage(format!("grid: {n:?} is not a point count")))?;
            if n < 2 || !(a < b) {
                return Err(usage(format!(
                    "grid {s:?}: need a < b and at least two points"
                )));
            }
            uniform_grid(a, b, n)
        }
        [_] => list(s, "grid")?,
        _ => return Err(usage(format!("grid {s:?}: expected a:b:n or a comma list"))),
    };
    if g.len() < 2 || g.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(usage(format!(
            "grid {s:?} must be strictly increasing with two or more points"
        )));
    }
    Ok(g)
}

pub fn vector(s: &str, what: &str) -> Result<DVector<f64>, CliError> {
    let v = list(s, what)?;
    if v.is_empty() {
        return Err(usage(format!("{what} is empty")));
    }
    Ok(DVector::from_vec(v))
}

/// Rows separated by `;`, entries by `,`.
pub fn matrix_inline(s: &str) -> Result<DMatrix<f64>, CliError> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|r| list(r, "matrix"))
        .collect::<Result<_, _>>()?;
    square(rows, s)
}

/// Headerless CSV of a square matrix.
pub fn matrix_file(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let rows = csv_rows(path, false)?;
    square(rows, &path.display().to_string())
}

fn square(rows: Vec<Vec<f64>>, src: &str) -> Result<DMatrix<f64>, CliError> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(usage(format!("matrix {src:?} is not square")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn csv_rows(path: &Path, header: bool) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        rows.push(
            rec.iter()
                .map(|c| number(c, &path.display().to_string()))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(rows)
}

type Args = Vec<(Option<String>, f64)>;

/// `name(k=v,...)` or `name(v,...)` into the name and its arguments.
fn call(s: &str) -> Result<(String, Args), CliError> {
    let s = s.trim();
    let Some(open) = s.find('(') else {
        return Ok((s.to_string(), Vec::new()));
    };
    if !s.ends_with(')') {
        return Err(usage(format!("{s:?}: missing closing parenthesis")));
    }
    let name = s[..open].trim().to_string();
    let mut args = Vec::new();
    for part in s[open + 1..s.len() - 1]
        .split(',')
        .filter(|p| !p.trim().is_empty())
    {
        match part.split_once('=') {
            Some((k, v)) => args.push((Some(k.trim().to_string()), number(v, &name)?)),
            None => args.push((None, number(part, &name)?)),
        }
    }
    Ok((name, args))
}

fn keyed(
    name: &str,
    args: &[(Option<String>, f64)],
    key: &str,
    default: Option<f64>,
) -> Result<f64, CliError> {
    for (k, v) in args {
        if k.as_deref() == Some(key) {
            return Ok(*v);
        }
    }
    default.ok_or_else(|| usage(format!("{name}: missing parameter {key}")))
}

fn check_keys(
    name: &str,
    args: &[(Option<String>, f64)],
    allowed: &[&str],
) -> Result<(), CliError> {
    for (k, _) in args {
        match k {
            Some(k) if allowed.contains(&k.as_str()) => {}
            Some(k) => {
                return Err(usage(format!(
                    "{name}: unknown parameter {k} (expected {})",
                    allowed.join(", ")
                )))
            }
            None => {
                return Err(usage(format!(
                    "{name}: parameters must be given as key=value"
                )))
            }
        }
    }
    Ok(())
}

/// Built-in families: `rotation(omega=,d1=,d2=)`, `diagonal(v1,v2,...)` and
/// `constant` (with the matrix from `--a`/`--matrix`).
pub fn family(text: &str, constant: Option<DMatrix<f64>>) -> Result<GeneratorFamily, CliError> {
    let (name, args) = call(text)?;
    let fam = match name.as_str() {
        "rotation" => {
            check_keys(&name, &args, &["omega", "d1", "d2"])?;
            GeneratorFamily::rotation_decay(
                keyed(&name, &args, "omega", None)?,
                keyed(&name, &args, "d1", None)?,
                keyed(&name, &args, "d2", None)?,
            )
        }
        "diagonal" => {
            if args.iter().any(|(k, _)| k.is_some()) || args.is_empty() {
                return Err(usage("diagonal: give the entries as diagonal(v1,v2,...)"));
            }
            GeneratorFamily::diagonal(&args.iter().map(|a| a.1).collect::<Vec<_>>())
        }
        "constant" => {
            let a = constant.ok_or_else(|| usage("family constant needs --a or --matrix"))?;
            GeneratorFamily::constant(a)
        }
        _ => {
            return Err(usage(format!(
                "unknown family {name:?} (rotation, diagonal, constant, or --table)"
            )))
        }
    };
    fam.map_err(CliError::Core)
}

/// Piecewise-constant table with header `x,a11,a12,...` (row-major entries).
/// Row `i` holds `A` for `x <= x_i`; the last row must have `x = inf`.
pub fn table(path: &Path) -> Result<GeneratorFamily, CliError> {
    let rows = csv_rows(path, true)?;
    let src = path.display().to_string();
    if rows.is_empty() {
        return Err(usage(format!("{src}: empty table")));
    }
    let cols = rows[0].len();
    let d = ((cols - 1) as f64).sqrt().round() as usize;
    if cols < 2 || d * d != cols - 1 || rows.iter().any(|r| r.len() != cols) {
        return Err(usage(format!(
            "{src}: each row needs x followed by d*d matrix entries"
        )));
    }
    if rows.last().map(|r| r[0]) != Some(f64::INFINITY) {
        return Err(usage(format!("{src}: the last row must cover x up to inf")));
    }
    let breaks: Vec<f64> = rows[..rows.len() - 1].iter().map(|r| r[0]).collect();
    let mats = rows
        .iter()
        .map(|r| DMatrix::from_row_slice(d, d, &r[1..]))
        .collect();
    GeneratorFamily::piecewise(breaks, mats).map_err(CliError::Core)
}

/// `heat`, `heat(kappa=)`, `frac_laplace(alpha=)`, `transport(c=,damping=)`.
pub fn symbol(text: &str, n: usize, length: f64) -> Result<SymbolFamily, CliError> {
    let (name, args) = call(text)?;
    let s = match name.as_str() {
        "heat" => {
            check_keys(&name, &args, &["kappa"])?;
            SymbolFamily::heat_with(n, length, keyed(&name, &args, "kappa", Some(1.0))?)
        }
        "frac_laplace" => {
            check_keys(&name, &args, &["alpha"])?;
            SymbolFamily::frac_laplace(n, length, keyed(&name, &args, "alpha", None)?)
        }
        "transport" => {
            check_keys(&name, &args, &["c", "damping"])?;
            SymbolFamily::transport(
                n,
                length,
                keyed(&name, &args, "c", None)?,
                keyed(&name, &args, "damping", Some(0.0))?,
            )
        }
        _ => {
            return Err(usage(format!(
                "unknown symbol {name:?} (heat, frac_laplace, transport)"
            )))
        }
    };
    s.map_err(CliError::Core)
}

/// Terms `[c*]cos(k)`, `[c*]sin(k)` or a constant, joined by `+`, with
/// `cos(k)` meaning `cos(2πkw/L)` on the periodic cell.
pub fn source(text: &str, nodes: &[f64], length: f64) -> Result<Vec<f64>, CliError> {
    let mut h = vec![0.0; nodes.len()];
    for term in text.split('+').map(str::trim).filter(|t| !t.is_empty()) {
        let (coef, body) = match term.split_once('*') {
            Some((c, b)) => (number(c, "source")?, b.trim()),
            None => (1.0, term),
        };
        let (name, args) = call(body)?;
        let wave: Box<dyn Fn(f64) -> f64> = match (name.as_str(), args.as_slice()) {
            ("cos", [(None, k)]) => {
                let k = *k;
                Box::new(move |w| (2.0 * PI * k * w / length).cos())
            }
            ("sin", [(None, k)]) => {
                let k = *k;
                Box::new(move |w| (2.0 * PI * k * w / length).sin())
            }
            (c, []) => {
                let c = number(c, "source")?;
                Box::new(move |_| c)
            }
            _ => {
                return Err(usage(format!(
                    "source term {term:?}: expected cos(k), sin(k) or a number"
                )))
            }
        };
        for (v, &w) in h.iter_mut().zip(nodes) {
            *v += coef * wave(w);
        }
    }
    Ok(h)
}
