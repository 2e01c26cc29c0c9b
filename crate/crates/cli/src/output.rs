//! Artifacts: files under `--out` with a manifest, or stdout.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use genfrac_core::SolutionCurve;
use serde::Serialize;

use crate::config::Params;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct ExperimentManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub measure: Option<String>,
    pub samples: Option<usize>,
    pub eps: Option<f64>,
    pub seed: Option<u64>,
    pub grid: Option<String>,
    pub outputs: Vec<String>,
    /// Everything needed to rerun: pass this file back with `--config`.
    pub params: &'a std::collections::BTreeMap<String, String>,
}

/// Collects the artifacts of one run.
pub struct Sink {
    dir: Option<PathBuf>,
    files: Vec<(String, Vec<u8>)>,
    stdout: Vec<u8>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self {
            dir,
            files: Vec::new(),
            stdout: Vec::new(),
        }
    }

    pub fn to_dir(&self) -> bool {
        self.dir.is_some()
    }

    /// The main artifact: into `name` under `--out`, otherwise to stdout.
    pub fn primary(&mut self, name: &str, bytes: Vec<u8>) {
        if self.dir.is_some() {
            self.files.push((name.to_string(), bytes));
        } else {
            self.stdout.extend(bytes);
        }
    }

    /// Written only under `--out`.
    pub fn extra(&mut self, name: &str, bytes: Vec<u8>) {
        if self.dir.is_some() {
            self.files.push((name.to_string(), bytes));
        }
    }

    pub fn finish(self, command: &str, params: &Params, meta: RunMeta) -> Result<(), CliError> {
        let Some(dir) = self.dir else {
            std::io::stdout()
                .write_all(&self.stdout)
                .map_err(|e| CliError::Io(e.to_string()))?;
            return Ok(());
        };
        std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        let mut outputs = Vec::new();
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| io(&p, e))?;
            outputs.push(name.clone());
        }
        let manifest = ExperimentManifest {
            tool: "genfrac",
            version: env!("CARGO_PKG_VERSION"),
            command,
            measure: params.raw("nu").map(str::to_string),
            samples: meta.samples,
            eps: meta.eps,
            seed: meta.seed,
            grid: params
                .raw("grid")
                .or(params.raw("times"))
                .map(str::to_string),
            outputs,
            params: params.entries(),
        };
        let p = dir.join("manifest.json");
        let mut text =
            serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        std::fs::write(&p, text).map_err(|e| io(&p, e))
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RunMeta {
    pub samples: Option<usize>,
    pub eps: Option<f64>,
    pub seed: Option<u64>,
}

fn io(p: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", p.display()))
}

pub fn json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn curve_csv(c: &SolutionCurve) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    c.write_csv(&mut buf).map_err(CliError::Core)?;
    Ok(buf)
}

/// Line plot of every component of `c`, with ±2σ bands.
pub fn curve_svg(c: &SolutionCurve) -> Vec<u8> {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 48.0;
    let colours = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];
    let (x0, x1) = (c.grid[0], c.grid[c.len() - 1]);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (v, s) in c.values.iter().zip(&c.std_errors) {
        for k in 0..v.len() {
            lo = lo.min(v[k] - 2.0 * s[k]);
            hi = hi.max(v[k] + 2.0 * s[k]);
        }
    }
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - lo) / (hi - lo) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#444" points="{},{} {},{} {},{}"/>"##,
        PAD,
        PAD,
        PAD,
        H - PAD,
        W - PAD,
        H - PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{}" font-size="12">{x0:.3}</text>"#,
        H - PAD + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{x1:.3}</text>"#,
        W - PAD,
        H - PAD + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="{}" font-size="12">{hi:.3}</text>"#,
        PAD + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="{}" font-size="12">{lo:.3}</text>"#,
        H - PAD
    );
    for k in 0..c.dim() {
        let colour = colours[k % colours.len()];
        let upper: Vec<String> = c
            .grid
            .iter()
            .zip(&c.values)
            .zip(&c.std_errors)
            .map(|((&x, v), e)| format!("{:.2},{:.2}", px(x), py(v[k] + 2.0 * e[k])))
            .collect();
        let lower: Vec<String> = c
            .grid
            .iter()
            .zip(&c.values)
            .zip(&c.std_errors)
            .rev()
            .map(|((&x, v), e)| format!("{:.2},{:.2}", px(x), py(v[k] - 2.0 * e[k])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon fill="{colour}" fill-opacity="0.15" stroke="none" points="{} {}"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = c
            .grid
            .iter()
            .zip(&c.values)
            .map(|(&x, v)| format!("{:.2},{:.2}", px(x), py(v[k])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            line.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{colour}">f{k}</text>"#,
            W - PAD + 4.0,
            PAD + 14.0 * (k as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}
