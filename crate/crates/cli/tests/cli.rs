use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(config: &str, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_varhjb"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .args(extra)
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/manifest.json")).unwrap()).unwrap()
}

const EVAL_HAM: &str = r#"
schema_version = 1
task = "eval-ham"

[model]
id = "quadratic-jump"
states = [
  { matrix = [[0.5]], modulation = 0.2, wavevector = [1.0], offset = [0.0] },
  { matrix = [[1.5]], offset = [-0.2] },
  { matrix = [[0.8]], offset = [0.3] },
]

[model.rates]
family = "constant"
rates = [[0.0, 1.0, 0.5], [2.0, 0.0, 1.0], [0.7, 0.3, 0.0]]

[eval]
probes = 6
"#;

#[test]
fn eval_ham_passes_and_records_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(EVAL_HAM, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(dir.path());
    assert_eq!(m["status"], "complete");
    assert_eq!(m["verdict"], "PASS");
    let outputs = m["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|o| o["file"].as_str().unwrap().ends_with("hamiltonian.csv")));

    let mut rows = csv::Reader::from_path(dir.path().join("out/hamiltonian.csv")).unwrap();
    let col = rows.headers().unwrap().iter().position(|h| h == "abs_diff").unwrap();
    for rec in rows.records() {
        let diff: f64 = rec.unwrap()[col].parse().unwrap();
        assert!(diff <= 1e-7, "variational and eigenvalue values differ by {diff}");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(run(EVAL_HAM, d.path(), &["--seed", "7"]).status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("out/hamiltonian.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(manifest(a.path())["inputs_sha256"], manifest(b.path())["inputs_sha256"]);
}

#[test]
fn different_seeds_sample_different_probes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(EVAL_HAM, a.path(), &["--seed", "1"]);
    run(EVAL_HAM, b.path(), &["--seed", "2"]);
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("out/hamiltonian.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
}

#[test]
fn counterexample_passes_at_default_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("schema_version = 1\ntask = \"counterexample\"\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("out/counterexample.csv")).unwrap();
    assert!(text.lines().count() > 2);
}

#[test]
fn failed_verdict_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "schema_version = 1\ntask = \"counterexample\"\n[counterexample]\ntol = 1e-12\n";
    let out = run(cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(manifest(dir.path())["verdict"], "FAIL");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("schema_version = 1\ntask = \"counterexample\"\nsed = 3\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sed"));
    assert!(!dir.path().join("out/manifest.json").exists());
}

#[test]
fn wrong_schema_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("schema_version = 2\ntask = \"counterexample\"\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_model_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "schema_version = 1\ntask = \"eval-ham\"\n[model]\nid = \"quadratic-jump\"\nstates = [{ matrix = [[-1.0]], offset = [0.0] }]\n";
    let out = run(cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
