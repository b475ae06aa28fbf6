//! Command-line behaviour: exit codes and output files.

use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qcosim"))
}

#[test]
fn validate_config_defaults_ok() {
    let out = bin().arg("validate-config").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("tau_drift = 300"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin().args(["run", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["run", "--mode", "warp"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn validate_file(text: &str) -> (Option<i32>, String) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, text).unwrap();
    let out = bin().args(["validate-config", "--config"]).arg(&path).output().unwrap();
    (out.status.code(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn bad_config_exits_one_with_field_diagnostics() {
    let (code, err) = validate_file("tau_drift = -1\nqueue_sigma = 0\n");
    assert_eq!(code, Some(1));
    assert!(err.contains("tau_drift") && err.contains("queue_sigma"), "{err}");
    let (code, err) = validate_file("not_a_key = 3\n");
    assert_eq!(code, Some(1));
    assert!(err.contains("not_a_key"), "{err}");
}

#[test]
fn run_simple_band_writes_ten_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let out = bin()
        .args(["run", "--mode", "efaas", "--circuits", "simple", "--seed", "7", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summaries = fs::read_to_string(out_dir.join("summaries.csv")).unwrap();
    let lines: Vec<&str> = summaries.lines().collect();
    assert_eq!(lines.len(), 11);
    assert!(lines[0].starts_with("config_hash,variant,mode,circuit_id"));
    let iterations = fs::read_to_string(out_dir.join("iterations.csv")).unwrap();
    assert!(iterations.starts_with(
        "run_id,circuit_id,band,mode,iteration,ttns,queue_delay,calib_time,qpu_time,residual_cpu_block,energy,drift_event,timestamp"
    ));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], true);
    assert_eq!(manifest["runs"], 10);
    let hash = manifest["config_hash"].as_str().unwrap();
    assert!(lines[1..].iter().all(|l| l.starts_with(hash)));
    assert!(fs::read_to_string(out_dir.join("transitions.csv")).unwrap().starts_with("run_id,mode,time,qpu_id,from,to,trigger"));
}

#[test]
fn print_suite_lists_all_circuits() {
    let out = bin().arg("print-suite").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 31);
}
