use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn genfrac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genfrac"))
        .args(args)
        .env_remove("GENFRAC_SEED")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

const NU: &str = "stable(beta=0.5,c=1)";

#[test]
fn ml_matches_the_classical_function() {
    let v = stdout_json(&genfrac(&[
        "ml",
        "--nu",
        NU,
        "--z",
        "1",
        "--lambda",
        "1",
        "--samples",
        "100000",
        "--seed",
        "7",
    ]));
    let (value, se) = (
        v["value"].as_f64().unwrap(),
        v["std_error"].as_f64().unwrap(),
    );
    // E_{1/2}(-1) = e erfc(1)
    assert!(
        (value - 0.427_583_576_155_807).abs() < 3.0 * se,
        "{value} ± {se}"
    );
    assert_eq!(v["method"], "first_passage");
    assert_eq!(v["seed"], 7);
}

#[test]
fn ml_series_and_grid_outputs() {
    let v = stdout_json(&genfrac(&[
        "ml", "--nu", NU, "--z", "0.5,1", "--lambda", "1,2", "--method", "series",
    ]));
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["std_error"] == 0.0));
    let m = stdout_json(&genfrac(&[
        "ml",
        "--nu",
        NU,
        "--z",
        "1",
        "--a",
        "-1,0.5;-0.5,-1",
        "--samples",
        "2000",
    ]));
    assert_eq!(m["value"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_measure_is_a_validation_error() {
    let out = genfrac(&["ml", "--z", "1", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--nu"));
}

#[test]
fn unknown_flags_print_usage() {
    let out = genfrac(&["ml", "--nu", NU, "--frobnicate", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(genfrac(&["integrate"]).status.code(), Some(2));
}

#[test]
fn bad_values_are_validation_errors() {
    for args in [
        vec![
            "ml",
            "--nu",
            "stable(beta=1.5)",
            "--z",
            "1",
            "--lambda",
            "1",
        ],
        vec![
            "ml",
            "--nu",
            NU,
            "--z",
            "1",
            "--lambda",
            "1",
            "--samples",
            "many",
        ],
        vec![
            "solve-const",
            "--nu",
            NU,
            "--a",
            "1,2;3",
            "--y",
            "1,0",
            "--grid",
            "0:1:5",
        ],
        vec![
            "solve-psido",
            "--nu",
            NU,
            "--symbol",
            "transport(c=1)",
            "--times",
            "0.5,1",
            "--samples",
            "10",
        ],
    ] {
        let out = genfrac(&args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn numerical_failures_exit_with_3() {
    let out = genfrac(&[
        "ml", "--nu", NU, "--z", "1e6", "--lambda", "50", "--method", "series",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn potential_of_the_poisson_process() {
    let v = stdout_json(&genfrac(&[
        "potential",
        "--nu",
        "atoms[(1,1)]",
        "--z",
        "2.5",
        "--method",
        "series",
    ]));
    assert!((v["value"].as_f64().unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn outputs_are_reproducible_from_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    let base = [
        "solve-const",
        "--nu",
        NU,
        "--a",
        "-1,0.5;-0.5,-1",
        "--y",
        "1,0",
        "--g",
        "0.2,0.1",
        "--grid",
        "0:1:9",
        "--samples",
        "3000",
    ];
    let run = |out: &Path, extra: &[&str]| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", out.to_str().unwrap()]);
        let o = genfrac(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&a, &["--seed", "11"]);
    run(&b, &["--seed", "11", "--workers", "1"]);
    assert_eq!(read(&a.join("curve.csv")), read(&b.join("curve.csv")));
    let manifest = a.join("manifest.json");
    let o = genfrac(&[
        "solve-const",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&a.join("curve.csv")), read(&c.join("curve.csv")));
    assert_eq!(read(&manifest), read(&c.join("manifest.json")));
    let m: Value = serde_json::from_slice(&read(&manifest)).unwrap();
    assert_eq!(m["command"], "solve-const");
    assert_eq!(m["seed"], 11);
    assert_eq!(m["params"]["g"], "0.2,0.1");
    let wrong = genfrac(&["ml", "--config", manifest.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn config_file_and_seed_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        format!("# relaxation-type check\nnu = {NU}\nz = 1\nlambda = 1\nsamples = 5000\n"),
    )
    .unwrap();
    let from_env = Command::new(env!("CARGO_BIN_EXE_genfrac"))
        .args(["ml", "--config", cfg.to_str().unwrap()])
        .env("GENFRAC_SEED", "42")
        .output()
        .unwrap();
    let explicit = genfrac(&["ml", "--config", cfg.to_str().unwrap(), "--seed", "42"]);
    assert_eq!(stdout_json(&from_env), stdout_json(&explicit));
    let other = stdout_json(&genfrac(&[
        "ml",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "43",
    ]));
    assert_ne!(other["value"], stdout_json(&explicit)["value"]);
    // flags override the file
    let v = stdout_json(&genfrac(&[
        "ml",
        "--config",
        cfg.to_str().unwrap(),
        "--samples",
        "100",
    ]));
    assert_eq!(v["samples"], 100);
    std::fs::write(&cfg, "nu stable(beta=0.5)\n").unwrap();
    assert_eq!(
        genfrac(&["ml", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn verify_accepts_a_solve_const_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = genfrac(&[
        "solve-const",
        "--nu",
        NU,
        "--a",
        "-1,0.5;-0.5,-1",
        "--y",
        "1,0",
        "--grid",
        "0:1:33",
        "--samples",
        "4000",
        "--seed",
        "3",
        "--svg",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = String::from_utf8(read(&out.join("curve.svg"))).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    let curve = out.join("curve.csv");
    let v = stdout_json(&genfrac(&[
        "verify",
        "--curve",
        curve.to_str().unwrap(),
        "--nu",
        NU,
        "--a",
        "-1,0.5;-0.5,-1",
    ]));
    assert_eq!(v["passes"], true);
    assert!(v["max_residual"].as_f64().unwrap() <= v["allowance"].as_f64().unwrap());
    // the wrong generator is caught
    let bad = genfrac(&[
        "verify",
        "--curve",
        curve.to_str().unwrap(),
        "--nu",
        NU,
        "--a",
        "-3,0;0,-3",
    ]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn timedep_from_a_table_and_the_resolvent() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("a.csv");
    std::fs::write(
        &table,
        "x,a11,a12,a21,a22\n0.5,-0.3,0,1.5,-1.2\ninf,-1,2,0,-0.5\n",
    )
    .unwrap();
    let out = genfrac(&[
        "solve-timedep",
        "--nu",
        NU,
        "--table",
        table.to_str().unwrap(),
        "--y",
        "1,1",
        "--grid",
        "0:1:9",
        "--samples",
        "500",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("x,f0,f1,se0,se1\n"));
    assert_eq!(text.lines().count(), 10);
    let r = genfrac(&[
        "solve-timedep",
        "--nu",
        NU,
        "--family",
        "rotation(omega=2,d1=-1,d2=-2)",
        "--lambda",
        "0.8",
        "--g",
        "1,0",
        "--grid",
        "0:1:5",
        "--samples",
        "500",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let first = String::from_utf8(r.stdout)
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .to_string();
    assert_eq!(first, "0.0,0.0,0.0,0.0,0.0");
    let missing = genfrac(&[
        "solve-timedep",
        "--nu",
        NU,
        "--family",
        "diagonal(-1)",
        "--lambda",
        "1",
        "--grid",
        "0:1:5",
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn psido_writes_a_field_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("field");
    let o = genfrac(&[
        "solve-psido",
        "--nu",
        NU,
        "--symbol",
        "heat",
        "--n",
        "16",
        "--source",
        "cos(1) + 0.5*sin(2)",
        "--times",
        "0.5,1",
        "--samples",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let field = String::from_utf8(read(&out.join("field.csv"))).unwrap();
    let rows: Vec<&str> = field.lines().collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].split(',').count(), 17);
    assert!(out.join("field_stderr.csv").exists());
}

#[test]
fn simulate_emits_paths_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = genfrac(&[
        "simulate",
        "--nu",
        "atoms[(1,2)]",
        "--horizon",
        "3",
        "--paths",
        "5",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(read(&out.join("paths.csv"))).unwrap();
    assert!(text.starts_with("path_id,s,z\n"));
    let ids: std::collections::BTreeSet<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(ids.len(), 5);
    let summary: Value = serde_json::from_slice(&read(&out.join("summary.json"))).unwrap();
    assert_eq!(summary["paths"], 5);
    assert_eq!(summary["jump_rate"], 2.0);
    let s = stdout_json(&genfrac(&[
        "simulate",
        "--nu",
        "atoms[(1,2)]",
        "--horizon",
        "3",
        "--paths",
        "5",
        "--seed",
        "9",
    ]));
    assert_eq!(s, summary);
}
