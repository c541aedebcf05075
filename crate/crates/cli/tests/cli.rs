use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rnnattack"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn toy_vanilla(dir: &Path) -> String {
    let p = dir.join("toy.json");
    fs::write(
        &p,
        r#"{
  "format": "rnnattack-weights", "version": 1, "kind": "vanilla", "n": 1, "m": 1, "l": 2,
  "lifting": {"delta": 1.0, "substeps": 10},
  "matrices": {
    "U_h": {"shape": [1, 1], "data": [4.0]},
    "W_h": {"shape": [1, 1], "data": [0.0]},
    "b_h": {"shape": [1, 1], "data": [0.0]},
    "head_W": {"shape": [2, 1], "data": [-1.0, 1.0]},
    "head_b": {"shape": [2, 1], "data": [0.0, 0.0]}
  }
}"#,
    )
    .unwrap();
    p.to_str().unwrap().to_string()
}

fn small_gru(dir: &Path) -> String {
    let p = dir.join("gru.json");
    fs::write(
        &p,
        r#"{
  "format": "rnnattack-weights", "version": 1, "kind": "gru", "n": 2, "m": 1, "l": 2,
  "lifting": {"delta": 0.1, "substeps": 1},
  "matrices": {
    "U_z": {"shape": [2, 2], "data": [0.3, -0.2, 0.1, 0.4]},
    "W_z": {"shape": [2, 1], "data": [0.5, -0.3]},
    "b_z": {"shape": [2, 1], "data": [0.0, 0.1]},
    "U_r": {"shape": [2, 2], "data": [-0.1, 0.2, 0.3, 0.1]},
    "W_r": {"shape": [2, 1], "data": [0.2, 0.4]},
    "b_r": {"shape": [2, 1], "data": [0.1, -0.1]},
    "U_c": {"shape": [2, 2], "data": [0.8, -0.5, 0.4, 0.7]},
    "W_c": {"shape": [2, 1], "data": [1.2, -0.9]},
    "b_c": {"shape": [2, 1], "data": [0.0, 0.2]},
    "head_W": {"shape": [2, 2], "data": [1.0, -1.0, -1.0, 1.0]},
    "head_b": {"shape": [2, 1], "data": [0.0, 0.0]}
  }
}"#,
    )
    .unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let o = run(&[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(run(&["certify", "--bogus"]).status.code(), Some(1));
}

#[test]
fn missing_weights_is_a_runtime_error() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let o = run(&["certify", "--weights", "/nonexistent.json", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn toy_certificate_holds() {
    let d = tempfile::tempdir().unwrap();
    let w = toy_vanilla(d.path());
    let out = d.path().join("cert");
    let o = run(&["certify", "--weights", &w, "--h-box", "-0.1:0.1", "--x-box", "-2:2", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(v["holds"], true);
    let margin = v["min_margin"].as_f64().unwrap();
    assert!((margin - (4.0 - 0.4f64.cosh().powi(2))).abs() < 1e-12, "{margin}");
    assert!(out.join("certificate.csv").exists());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "certify");
}

#[test]
fn certify_rejects_gated_cells() {
    let d = tempfile::tempdir().unwrap();
    let w = small_gru(d.path());
    let out = d.path().join("o");
    assert_eq!(run(&["certify", "--weights", &w, "--out-dir", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn attack_writes_its_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let w = small_gru(d.path());
    let out = d.path().join("fixed");
    let o = run(&[
        "attack", "--weights", &w, "--method", "fixed", "--period", "5.5", "--alpha", "0.2", "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["signal.csv", "perturbation.csv", "probs.csv", "trajectory.csv", "summary.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["attack"]["alpha"], 0.2);
    assert_eq!(m["format"], "rnnattack-manifest");
}

#[test]
fn reruns_produce_identical_tables() {
    let d = tempfile::tempdir().unwrap();
    let w = small_gru(d.path());
    let runs: Vec<_> = (0..2)
        .map(|i| {
            let out = d.path().join(format!("run{i}"));
            let o = run(&[
                "bounds", "--weights", &w, "--method", "dynamic", "--index", "3", "--data-size", "10", "--alpha", "0.1",
                "--seed", "7", "--out-dir", out.to_str().unwrap(),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            out
        })
        .collect();
    for f in ["gronwall.csv", "coppel.csv"] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_and_report_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let w = small_gru(d.path());
    let out = d.path().join("sweep");
    let o = run(&[
        "sweep", "--weights", &w, "--gains", "0,0.1", "--data-size", "8", "--sequential", "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = d.path().join("plots");
    let o = run(&["report", "--run-dir", out.to_str().unwrap(), "--out-dir", rep.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(rep.join("manifest.json").exists());
}
