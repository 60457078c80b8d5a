//! End-to-end runs of the `ionize` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = r#"{"solver": {"t_max": 4.0, "n_steps": 400}, "ionization": {"time_step": 1.0, "monte_carlo_samples": 20000}}"#;
const IONIZING: &str = r#"{"model": {"r": 0.7, "alpha": [[0, 0.3, 0], [1, 0.25, 0]]}}"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn ionize(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ionize")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = ionize(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        for cmd in ["solve-charges", "survival", "ionization"] {
            run_ok(&["--config", s(&cfg), "--out", s(out), "--seed", "11", cmd]);
        }
    }
    for f in ["charges.csv", "survival.csv", "ionization.csv", "monte_carlo.json"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let header = std::fs::read_to_string(a.join("survival.csv")).unwrap();
    assert!(header.starts_with("t,re_theta,im_theta,abs_theta"));
}

#[test]
fn find_pole_reports_one_root_and_a_manifest() {
    let dir = TempDir::new().unwrap();
    run_ok(&["--out", s(dir.path()), "find-pole"]);
    let pole = json(&dir.path().join("pole.json"));
    assert_eq!(pole["lambda_roots"].as_array().unwrap().len(), 1);
    let lambda = pole["lambda_roots"][0].as_f64().unwrap();
    assert!((lambda - 1.0097756).abs() < 1e-6, "{lambda}");
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["command"], "find-pole");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["outputs"][0], "pole.json");
}

#[test]
fn constant_profile_is_not_generic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"model": {"alpha": [[0, 1, 0]]}}"#);
    run_ok(&["--config", s(&cfg), "--out", s(dir.path()), "check-genericity"]);
    let g = json(&dir.path().join("genericity.json"));
    assert_eq!(g["verdict"], "nongeneric");
    assert_eq!(g["report"]["residual"].as_f64().unwrap(), 1.0);
}

#[test]
fn fit_decay_finds_three_halves_on_an_ionizing_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), IONIZING);
    run_ok(&["--config", s(&cfg), "--out", s(dir.path()), "solve-charges"]);
    let csv = dir.path().join("charges.csv");
    let fit_dir = dir.path().join("fit");
    run_ok(&["--out", s(&fit_dir), "fit-decay", "--input", s(&csv)]);
    let f = json(&fit_dir.join("fit.json"));
    let e = f["exponent"].as_f64().unwrap();
    assert!((-1.8..=-1.2).contains(&e), "exponent {e}");
    assert_eq!(f["column"], "abs_q2");
    assert_eq!(f["method"], "envelope");
    assert_eq!(f["pass"], true);
}

#[test]
fn exit_codes_classify_failures() {
    let dir = TempDir::new().unwrap();
    let bad_json = write_config(dir.path(), "{ not json");
    assert_eq!(ionize(&["--config", s(&bad_json), "--out", s(dir.path()), "find-pole"]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(ionize(&["--config", s(&missing), "--out", s(dir.path()), "find-pole"]).status.code(), Some(2));
    let bad_r = write_config(dir.path(), r#"{"model": {"r": 0.0}}"#);
    assert_eq!(ionize(&["--config", s(&bad_r), "--out", s(dir.path()), "find-pole"]).status.code(), Some(3));
    let no_t = dir.path().join("no_t.csv");
    std::fs::write(&no_t, "x,abs_q2\n1,2\n").unwrap();
    assert_eq!(ionize(&["--out", s(dir.path()), "fit-decay", "--input", s(&no_t)]).status.code(), Some(3));
}
