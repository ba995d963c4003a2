use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pseudomode"))
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs").join(name)
}

fn run(config: &Path, out: &Path) -> Output {
    bin().arg("--config").arg(config).arg("--output").arg(out).output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn theorem_example_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&example("verify_theorem.json"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["passed"], Value::Bool(true));
    let r = &report["results"]["report"];
    assert!(r["delta"].as_f64().unwrap() <= r["error_bound"].as_f64().unwrap());
    assert!(dir.path().join("correlation.csv").exists());
    assert!(dir.path().join("run_meta.json").exists());
}

#[test]
fn missing_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"command": "multitime",
            "model": {"system": {"hamiltonian": [[0.5, 0], [0, -0.5]], "couplings": ["pauli_x"], "initial_state": "projector_0"},
                      "pseudomodes": {"couplings": [[0.3]]}},
            "requests": [{"times": [1.0], "left": ["identity"]}]}"#,
    )
    .unwrap();
    let out = run(&cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("modes"), "{err}");
}

#[test]
fn identity_batch_gives_unit_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("id.json");
    std::fs::write(
        &cfg,
        r#"{"command": "multitime",
            "model": {"system": {"hamiltonian": [[0.5, 0], [0, -0.5]], "couplings": ["pauli_x"], "initial_state": "plus_state"},
                      "pseudomodes": {"modes": [{"omega": 1.0, "gamma": 0.5, "n_max": 7}], "couplings": [[0.3]]}},
            "requests": [{"times": [0.5], "left": ["identity"]},
                         {"times": [0.5, 2.0], "left": ["identity", "identity"]},
                         {"times": [0.5, 1.0, 3.0], "left": ["identity", "identity", "identity"]}]}"#,
    )
    .unwrap();
    let out = run(&cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("multitime.csv")).unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let re: f64 = rec[1].parse().unwrap();
        let im: f64 = rec[2].parse().unwrap();
        assert!((re - 1.0).abs() < 1e-10 && im.abs() < 1e-10, "{rec:?}");
        rows += 1;
    }
    assert_eq!(rows, 3);
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&example("multitime.json"), dir.path());
        assert_eq!(out.status.code(), Some(0));
    }
    for file in ["report.json", "multitime.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between runs");
    }
}

#[test]
fn unknown_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"command": "frobnicate"}"#).unwrap();
    let out = run(&cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
}
