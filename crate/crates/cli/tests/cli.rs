//! End-to-end checks of the `cascade-detect` binary.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade-detect"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    let cfg = serde_json::json!({
        "suite": { "lesion_patients": 3, "control_patients": 1 },
        "folds": 2,
        "views": { "n_translations": 2, "n_rotations": 1 },
        "train_views": { "n_translations": 1, "n_rotations": 1 },
        "train": { "epochs": 1 },
        "n_ablation": [1, 2],
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn default_config_is_valid_json() {
    let out = run(&["default-config"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["folds"], 5);
}

#[test]
fn stage_without_upstream_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&["tier1", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gen-data") || err.contains("missing"), "{err}");
}

#[test]
fn missing_output_directory_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run(&["gen-data", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("output directory"));
}

#[test]
fn gen_data_then_tier1_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let out_arg = out_dir.to_str().unwrap();
    for stage in ["gen-data", "tier1", "sample-views"] {
        let out = run(&[stage, "--config", &cfg, "--out", out_arg, "--seed", "3"]);
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(out_dir.join("log.jsonl").exists());
    assert!(out_dir.join("data").is_dir());
    assert!(out_dir.join("candidates").is_dir());
    assert!(out_dir.join("views").is_dir());
}
