use std::path::PathBuf;

use clap::Args;
use genfrac_core::mc::batch_rng;
use genfrac_core::mittag_leffler::gen_ml_grid;
use genfrac_core::timedep::{resolvent_curve_with, solve_boundary_with};
use genfrac_core::{
    gen_ml_operator, gen_ml_scalar, parse_measure, potential_mass, residual, solve_const_with,
    GeneratorFamily, GriddedFunction, LevyMeasure, MatrixGenerator, McOptions, MlMethod,
    PathEstimator, PotentialMethod, SolutionCurve, SpaceTimeField, Subordinator, Truncation,
};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::config::Params;
use crate::output::{curve_csv, curve_svg, json as to_json, RunMeta, Sink};
use crate::parse;
use crate::CliError;

type Outcome = Result<(RunMeta, Option<String>), CliError>;

macro_rules! fill {
    ($p:expr, $args:expr, $($field:ident),+) => {
        $( $p.set(&stringify!($field).replace('_', "-"), $args.$field.as_ref()); )+
    };
}

fn options(p: &mut Params, default_samples: usize) -> Result<McOptions, CliError> {
    let samples: usize = p.get_or("samples", default_samples)?;
    if samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let seed = p.resolve_seed()?;
    p.set("samples", Some(&samples.to_string()));
    let mut opts = McOptions::new(samples, seed);
    if let Some(eps) = p.get::<f64>("eps")? {
        if !(eps > 0.0) {
            return Err(CliError::Usage(format!(
                "--eps must be positive, got {eps}"
            )));
        }
        opts = opts.with_truncation(Truncation::Plain { eps });
    }
    Ok(opts)
}

fn measure(p: &Params) -> Result<LevyMeasure, CliError> {
    Ok(parse_measure(p.require("nu")?)?)
}

/// `--a` inline or `--matrix` file.
fn constant_matrix(p: &Params) -> Result<Option<DMatrix<f64>>, CliError> {
    match (p.raw("a"), p.raw("matrix")) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "give either --a or --matrix, not both".into(),
        )),
        (Some(a), None) => parse::matrix_inline(a).map(Some),
        (None, Some(f)) => parse::matrix_file(&PathBuf::from(f)).map(Some),
        (None, None) => Ok(None),
    }
}

fn matrix_generator(p: &Params) -> Result<MatrixGenerator, CliError> {
    let a = constant_matrix(p)?
        .ok_or_else(|| CliError::Usage("missing required option --a (or --matrix)".into()))?;
    let mut gen = MatrixGenerator::new(a)?;
    if let Some(g) = p.raw("growth") {
        let v = parse::list(g, "growth")?;
        let [m_const, rate] = v[..] else {
            return Err(CliError::Usage("--growth takes M,m".into()));
        };
        gen = gen.with_growth(m_const, rate)?;
    }
    Ok(gen)
}

fn family(p: &Params) -> Result<GeneratorFamily, CliError> {
    if let Some(t) = p.raw("table") {
        if p.raw("family").is_some() {
            return Err(CliError::Usage(
                "give either --family or --table, not both".into(),
            ));
        }
        return parse::table(&PathBuf::from(t));
    }
    parse::family(p.raw("family").unwrap_or("constant"), constant_matrix(p)?)
}

/// A constant source vector over `grid`.
fn source(p: &Params, grid: &[f64], d: usize) -> Result<Option<GriddedFunction>, CliError> {
    let Some(g) = p.raw("g") else { return Ok(None) };
    let v = parse::vector(g, "g")?;
    if v.len() != d {
        return Err(CliError::Usage(format!(
            "--g has {} entries, the problem has dimension {d}",
            v.len()
        )));
    }
    let lo = grid[0].min(0.0) - 1.0;
    Ok(Some(GriddedFunction::from_fn(
        vec![lo, grid[grid.len() - 1]],
        |_| v.clone(),
    )?))
}

fn estimator(p: &Params) -> Result<PathEstimator, CliError> {
    Ok(p.raw("estimator")
        .map(str::parse)
        .transpose()?
        .unwrap_or_default())
}

#[derive(Args, Debug, Clone)]
pub struct MlArgs {
    /// jump measure, e.g. "stable(beta=0.5,c=1)"
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<String>,
    /// level(s), comma separated
    #[arg(long, allow_hyphen_values = true)]
    z: Option<String>,
    /// λ value(s), comma separated
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// CSV file with a square matrix A
    #[arg(long, allow_hyphen_values = true)]
    matrix: Option<String>,
    /// inline matrix A, rows split by ';'
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    /// growth constants M,m of e^{tA}
    #[arg(long, allow_hyphen_values = true)]
    growth: Option<String>,
    /// first_passage, series or quadrature
    #[arg(long, allow_hyphen_values = true)]
    method: Option<String>,
}

pub fn ml(args: &MlArgs, p: &mut Params, sink: &mut Sink) -> Outcome {
    fill!(p, args, nu, z, lambda, matrix, a, growth, method);
    let nu = measure(p)?;
    let opts = options(p, 100_000)?;
    let method: MlMethod = p
        .raw("method")
        .map(str::parse)
        .transpose()?
        .unwrap_or(MlMethod::FirstPassage);
    let zs = parse::list(p.require("z")?, "z")?;
    let mut eps = None;
    let doc = if p.raw("a").is_some() || p.raw("matrix").is_some() {
        if p.raw("lambda").is_some() {
            return Err(CliError::Usage(
                "--lambda and a matrix are exclusive".into(),
            ));
        }
        let gen = matrix_generator(p)?;
        let mut rows = Vec::new();
        for &z in &zs {
            let v = gen_ml_operator(&nu, z, &gen, method, &opts)?;
            eps = v.eps;
            let rows_of = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
                m.row_iter().map(|r| r.iter().copied().collect()).collect()
            };
            rows.push(json!({
                "z": z, "method": v.method.to_string(), "value": rows_of(&v.value), "std_error": rows_of(&v.std_error),
                "samples": v.samples, "eps": v.eps, "seed": opts.seed,
            }));
        }
        rows
    } else {
        let lams = parse::list(p.require("lambda")?, "lambda")?;
        let table = match method {
            MlMethod::FirstPassage => gen_ml_grid(&nu, &zs, &lams, &opts)?,
            _ => zs
                .iter()
                .map(|&z| {
                    lams.iter()
                        .map(|&l| gen_ml_scalar(&nu, z, l, method, &opts))
                        .collect()
                })
                .collect::<genfrac_core::Result<_>>()?,
        };
        let mut rows = Vec::new();
        for (i, &z) in zs.iter().enumerate() {
            for (j, &l) in lams.iter().enumerate() {
                let v = &table[i][j];
                eps = v.eps;
                rows.push(json!({
                    "z": z, "lambda": l, "method": v.method.to_string(), "value": v.value, "std_error": v.std_error,
                    "samples": v.samples, "eps": v.eps, "seed": opts.seed,
                }));
            }
        }
        rows
    };
    sink.primary("ml.json", to_json(&collapse(doc))?);
    Ok((
        RunMeta {
            samples: Some(opts.samples),
            eps,
            seed: Some(opts.seed),
        },
        None,
    ))
}

fn collapse(mut rows: Vec<Value>) -> Value {
    if rows.len() == 1 {
        rows.pop().unwrap_or(Value::Null)
    } else {
        Value::Array(rows)
    }
}

#[derive(Args, Debug, Clone)]
pub struct PotentialArgs {
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<String>,
    /// λ value(s) >= 0
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// level(s) z
    #[arg(long, allow_hyphen_values = true)]
    z: Option<String>,
    /// closed_form, series or monte_carlo
    #[arg(long, allow_hyphen_values = true)]
    method: Option<String>,
}

pub fn potential(args: &PotentialArgs, p: &mut Params, sink: &mut Sink) -> Outcome {
    fill!(p, args, nu, lambda, z, method);
    let nu = measure(p)?;
    let opts = options(p, 100_000)?;
    let method: PotentialMethod = p
        .raw("method")
        .map(str::parse)
        .transpose()?
        .unwrap_or(PotentialMethod::MonteCarlo);
    let lams = parse::list(p.raw("lambda").unwrap_or("0"), "lambda")?;
    let zs = parse::list(p.require("z")?, "z")?;
    let mut rows = Vec::new();
    let mut eps = None;
    for &l in &lams {
        for &z in &zs {
            let e = potential_mass(&nu, l, z, method, &opts)?;
            eps = e.eps;
            rows.push(serde_json::to_value(&e).map_err(|e| CliError::Io(e.to_string()))?);
        }
    }
    sink.primary("potential.json", to_json(&collapse(rows))?);
    Ok((
        RunMeta {
            samples: Some(opts.samples),
            eps,
            seed: Some(opts.seed),
        },
        None,
    ))
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<String>,
    /// time horizon
    #[arg(long, allow_hyphen_values = true)]
    horizon: Option<String>,
    /// number of paths written out
    #[arg(long, allow_hyphen_values = true)]
    paths: Option<String>,
}

pub fn simulate(args: &SimulateArgs, p: &mut Params, sink: &mut Sink) -> Outcome {
    fill!(p, args, nu, horizon, paths);
    let nu = measure(p)?;
    let opts = options(p, 1)?;
    let horizon: f64 = p.get_or("horizon", 1.0)?;
    let paths: usize = p.get_or("paths", 10)?;
    if paths == 0 {
        return Err(CliError::Usage("--paths must be positive".into()));
    }
    let sub = Subordinator::pure_jump(&nu, opts.truncation)?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    csv.write_record(["path_id", "s", "z"]).map_err(io)?;
    let (mut sum, mut sq, mut jumps) = (0.0, 0.0, 0usize);
    for id in 0..paths {
        let mut rng = batch_rng(opts.seed, id);
        let path = sub.sample_path(horizon, 0.0, &mut rng)?;
        let mut z = 0.0;
        csv.write_record([id.to_string(), "0".into(), "0".into()])
            .map_err(io)?;
        for (&s, &dz) in path.jump_times.iter().zip(&path.jump_sizes) {
            z += dz;
            csv.write_record([id.to_string(), format!("{s:e}"), format!("{z:e}")])
                .map_err(io)?;
        }
        sum += z;
        sq += z * z;
        jumps += path.n_jumps();
    }
    let n = paths as f64;
    let mean = sum / n;
    let se = if paths > 1 {
        ((sq - n * mean * mean).max(0.0) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    let summary = json!({
        "measure": nu.to_string(), "paths": paths, "horizon": horizon, "seed": opts.seed,
        "eps": sub.truncation().eps(), "jump_rate": sub.rate(),
        "mean_end": mean, "std_error_end": se, "mean_jumps": jumps as f64 / n,
    });
    if sink.to_dir() {
        sink.primary(
            "paths.csv",
            csv.into_inner().map_err(|e| CliError::Io(e.to_string()))?,
        );
        sink.extra("summary.json", to_json(&summary)?);
    } else {
        sink.primary("summary.json", to_json(&summary)?);
    }
    Ok((
        RunMeta {
            samples: Some(paths),
            eps: sub.truncation().eps(),
            seed: Some(opts.seed),
        },
        None,
    ))
}

#[derive(Args, Debug, Clone)]
pub struct ConstArgs {
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<String>,
    /// inline matrix A, rows split by ';'
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    /// CSV file with A
    #[arg(long, allow_hyphen_values = true)]
    matrix: Option<String>,
    /// growth constants M,m of e^{tA}
    #[arg(long, allow_hyphen_values = true)]
    growth: Option<String>,
    /// boundary value f(a)
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    /// constant source vector
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    /// uniform grid a:b:n
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// conditional or pathwise
    #[arg(long, allow_hyphen_values = true)]
    estimator: Option<String>,
}

fn write_curve(sink: &mut Sink, c: &SolutionCurve, svg: bool) -> Result<(), CliError> {
    sink.primary("curve.csv", curve_csv(c)?);
    if svg {
        sink.extra("curve.svg", curve_svg(c));
    }
    Ok(())
}

pub fn solve_const(args: &ConstArgs, p: &mut Params, sink: &mut Sink, svg: bool) -> Outcome {
    fill!(p, args, nu, a, matrix, growth, y, g, grid, estimator);
    let nu = measure(p)?;
    let opts = options(p, 10_000)?;
    let gen = matrix_generator(p)?;
    let grid = parse::grid(p.require("grid")?)?;
    let y = parse::vector(p.require("y")?, "y")?;
    let g = source(p, &grid, gen.dim())?;
    let c = solve_const_with(&nu, &gen, &y, g.as_ref(), &grid, &opts, estimator(p)?)?;
    write_curve(sink, &c, svg)?;
    Ok((
        RunMeta {
            samples: Some(opts.samples),
            eps: c.meta.eps,
            seed: Some(opts.seed),
        },
        None,
    ))
}

#[derive(Args, Debug, Clone)]
pub struct TimedepArgs {
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<String>,
    /// rotation(omega=,d1=,d2=), diagonal(v1,...) or constant
    #[arg(long, allow_hyphen_values = true)]
    family: Option<String>,
    /// piecewise-constant table CSV: x,a11,a12,... with the last x = inf
    #[arg(long, allow_hyphen_values = true)]
    table: Option<String>,
    /// inline matrix for the constant family
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    matrix: Option<String>,
    /// boundary value f(a); omit with --lambda
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    /// constant source vector
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    /// boundary point a (default: first grid point)
    #[arg(long, allow_hyphen_values = true)]
    boundary: Option<String>,
    /// solve the resolvent equation at this λ instead
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    estimator: Option<String>,
}

pub fn solve_timedep(args: &TimedepArgs, p: &mut Params, sink: &mut Sink, svg: bool) -> Outcome {
    fill!(p, args, nu, family, table, a, matrix, y, g, boundary, lambda, grid, estimator);
    let nu = measure(p)?;
    let opts = options(p, 4_000)?;
    let gen = family(p)?;
    let grid = parse::grid(p.require("grid")?)?;
    let a: f64 = p.get_or("boundary", grid[0])?;
    let g = source(p, &grid, gen.dim())?;
    let est = estimator(p)?;
    let c = match p.get::<f64>("lambda")? {
        Some(lam) => {
            if p.raw("y").is_some() {
                return Err(CliError::Usage(
                    "the resolvent has zero boundary data; drop --y".into(),
                ));
            }
            let g = g.ok_or_else(|| CliError::Usage("the resolvent needs a source --g".into()))?;
            resolvent_curve_with(&nu, &gen, lam, &g, a, &grid, &opts, est)?
        }
        None => {
            let y = parse::vector(p.require("y")?, "y")?;
            solve_boundary_with(&nu, &gen, &y, g.as_ref(), a, &grid, &opts, est)?
        }
    };
    write_curve(sink, &c, svg)?;
    Ok((
        RunMeta {
            samples: Some(opts.samples),
            eps: c.meta.eps,
            seed: Some(opts.seed),
        },
        None,
    ))
}

#[derive(Args, Debug, Clone)]
pub struct PsidoArgs {
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<String>,
    /// heat, heat(kappa=), frac_laplace(alpha=), transport(c=,damping=)
    #[arg(long, allow_hyphen_values = true)]
    symbol: Option<String>,
    /// number of spatial nodes
    #[arg(long, allow_hyphen_values = true)]
    n: Option<String>,
    /// period of the spatial cell
    #[arg(long, allow_hyphen_values = true)]
    length: Option<String>,
    /// source such as "cos(1) + 0.5*sin(3)"
    #[arg(long, allow_hyphen_values = true)]
    source: Option<String>,
    /// output times, a:b:n or a list
    #[arg(long, allow_hyphen_values = true)]
    times: Option<String>,
    /// initial time a (default 0)
    #[arg(long, allow_hyphen_values = true)]
    start: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    estimator: Option<String>,
}

pub fn solve_psido(args: &PsidoArgs, p: &mut Params, sink: &mut Sink) -> Outcome {
    fill!(p, args, nu, symbol, n, length, source, times, start, estimator);
    let nu = measure(p)?;
    let opts = options(p, 10_000)?;
    let n: usize = p.get_or("n", 64)?;
    let length: f64 = p.get_or("length", 2.0 * std::f64::consts::PI)?;
    let sym = parse::symbol(p.raw("symbol").unwrap_or("heat"), n, length)?;
    let h = parse::source(p.raw("source").unwrap_or("cos(1)"), &sym.nodes(), length)?;
    let times = parse::grid(p.require("times")?)?;
    let a: f64 = p.get_or("start", 0.0)?;
    let g = SpaceTimeField::separable(vec![a], &h, |_| 1.0)?;
    let f = genfrac_core::psido::solve_psido_with(&nu, &sym, &g, a, &times, &opts, estimator(p)?)?;
    let matrix = |rows: &[Vec<f64>]| -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        let mut header = vec!["t".to_string()];
        header.extend(f.w.iter().map(|w| format!("{w}")));
        w.write_record(&header).map_err(io)?;
        for (t, row) in f.t.iter().zip(rows) {
            let mut rec = vec![format!("{t}")];
            rec.extend(row.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    };
    sink.primary("field.csv", matrix(&f.values)?);
    sink.extra("field_stderr.csv", matrix(&f.std_errors)?);
    Ok((
        RunMeta {
            samples: Some(opts.samples),
            eps: f.eps,
            seed: Some(opts.seed),
        },
        None,
    ))
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    /// solution curve CSV from solve-const or solve-timedep
    #[arg(long, allow_hyphen_values = true)]
    curve: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    family: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    table: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    matrix: Option<String>,
    /// constant source vector
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    /// check the resolvent equation A - λ instead
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
}

const RESIDUAL_ABS: f64 = 5e-3;
const RESIDUAL_SIGMAS: f64 = 5.0;

pub fn verify(args: &VerifyArgs, p: &mut Params, sink: &mut Sink) -> Outcome {
    fill!(p, args, curve, nu, family, table, a, matrix, g, lambda);
    let nu = measure(p)?;
    let path = PathBuf::from(p.require("curve")?);
    let file =
        std::fs::File::open(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let curve = SolutionCurve::read_csv(file)?;
    let mut gen = family(p)?;
    if let Some(lam) = p.get::<f64>("lambda")? {
        let base = gen.clone();
        let (lo, hi) = (curve.grid[0] - 1.0, curve.grid[curve.len() - 1] + 1.0);
        let d = base.dim();
        gen = GeneratorFamily::custom(d, lo.min(-1.0), hi, move |x| {
            base.eval(x) - DMatrix::<f64>::identity(d, d) * lam
        })?;
    }
    let g = source(p, &curve.grid, gen.dim())?;
    let rep = residual(&curve, &nu, &gen, g.as_ref())?;
    let sigma = curve.max_std_error();
    let allowance = RESIDUAL_ABS + RESIDUAL_SIGMAS * sigma;
    let passes = rep.max_residual <= allowance;
    let doc = json!({
        "curve": path.display().to_string(), "max_residual": rep.max_residual, "at_x": rep.at_x,
        "quadrature_error": rep.quadrature_error, "max_std_error": sigma, "allowance": allowance, "passes": passes,
        "residuals": rep.residuals,
    });
    sink.primary("residual.json", to_json(&doc)?);
    let failed = (!passes).then(|| {
        format!(
            "residual {:.3e} at x = {} exceeds {allowance:.3e}",
            rep.max_residual, rep.at_x
        )
    });
    Ok((RunMeta::default(), failed))
}
