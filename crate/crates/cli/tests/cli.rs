use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_deepgp-lab");

fn single() -> Value {
    json!({"q": 0, "dims": [1, 1], "eff_dims": [1, 1], "active_sets": [[[1]]], "betas": [1.0], "beta_bounds": [1.0, 1.0]})
}

fn fit_section(conditioning: Value) -> Value {
    json!({
        "prior": {"structures": [single()], "profile": {"family": "truncated_wavelet"}, "n": 100, "conditioning": conditioning},
        "posterior": {"iterations": 60, "chains": 1},
        "data": {"kind": "synthetic", "n": 100, "truth": {"kind": "sine", "amplitude": 0.5, "frequency": 2.0, "input_dim": 1}}
    })
}

fn run(dir: &Path, config: &Value, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    Command::new(BIN)
        .args(["--config", path.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()])
        .args(args)
        .env_remove("DEEPGP_LAB_THREADS")
        .output()
        .unwrap()
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

#[test]
fn malformed_config_exits_1_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let mut fit = fit_section(json!({}));
    fit["posterior"]["chians"] = json!(2);
    let o = run(dir.path(), &json!({"schema_version": 1, "fit": fit}), &["fit"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["exit_code"], 1);
    assert!(e["pointer"].as_str().unwrap().starts_with("/fit/posterior"), "{e}");

    let path = dir.path().join("broken.json");
    std::fs::write(&path, b"{\"schema_version\": 1, \"rates\": {").unwrap();
    let o = Command::new(BIN).args(["rates", "--config", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_json(&o)["pointer"].is_string());
}

#[test]
fn semantic_errors_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut fit = fit_section(json!({}));
    fit["posterior"]["pcn_step"] = json!(1.5);
    let o = run(dir.path(), &json!({"schema_version": 1, "fit": fit}), &["fit"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["pointer"], "/fit/posterior");

    let o = run(dir.path(), &json!({"schema_version": 1}), &["prior"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["pointer"], "/prior");

    let o = Command::new(BIN).args(["frobnicate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "usage");
}

#[test]
fn verify_rates_suite_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN).args(["verify", "--suite", "rates", "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);
    assert!(dir.path().join("verify.csv").exists());
}

#[test]
fn infeasible_conditioning_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let fit = fit_section(json!({"sup_bound": 1e-6, "max_attempts": 5}));
    let o = run(dir.path(), &json!({"schema_version": 1, "fit": fit}), &["fit"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "conditioning_too_tight");
    assert!(!dir.path().join("out/manifest.json").exists());
}

#[test]
fn zero_threads_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["verify", "--suite", "rates", "--out", dir.path().to_str().unwrap()])
        .env("DEEPGP_LAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn manifest_hashes_match_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({"schema_version": 1, "seed": 11, "fit": fit_section(json!({}))});
    let o = run(dir.path(), &config, &["fit"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    let artifacts = manifest["artifacts"].as_array().unwrap();
    assert!(artifacts.len() >= 7);
    for a in artifacts {
        let bytes = std::fs::read(out.join(a["file"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"], bytes.len());
        let hex: String = sha2_hex(&bytes);
        assert_eq!(a["sha256"], hex);
    }
    // no temporaries left behind
    assert!(std::fs::read_dir(&out).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().starts_with('.')));
}

fn sha2_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn fit_from_csv_then_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let mut text = String::from("x1,y\n");
    for i in 0..60 {
        let x = -1.0 + 2.0 * i as f64 / 59.0;
        text.push_str(&format!("{x},{}\n", 0.4 * x));
    }
    std::fs::write(&data, text).unwrap();
    let mut fit = fit_section(json!({}));
    fit["data"] = json!({"kind": "csv", "path": data});
    let o = run(dir.path(), &json!({"schema_version": 1, "fit": fit}), &["fit"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    // no truth: llr and l2 columns empty
    let row: Vec<&str> = trace.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((row[5], row[6]), ("", ""));

    let fit_dir = dir.path().join("out");
    let diag = dir.path().join("diag");
    let config = json!({"schema_version": 1, "diagnose": {"fit_dirs": [fit_dir], "truth_structure": single()}});
    let path = dir.path().join("diag.json");
    std::fs::write(&path, serde_json::to_vec(&config).unwrap()).unwrap();
    let o = Command::new(BIN).args(["diagnose", "--config", path.to_str().unwrap(), "--out", diag.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mass = std::fs::read_to_string(diag.join("model_mass.csv")).unwrap();
    assert_eq!(mass.lines().nth(1).unwrap(), "0,60,1.0000000000000000e0,false,1.0000000000000000e0");
}
