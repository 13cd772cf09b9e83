use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn critsys(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_critsys")).args(args).output().expect("spawn critsys")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn constants_prints_json() {
    let out = critsys(&["constants", "-D", "dim=4", "-D", "lambda=-1"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["sobolev_constant"].as_f64().unwrap() - 10.2591).abs() < 1e-2);
    assert!((v["nehari_inf_value"].as_f64().unwrap() - 52.625).abs() < 0.1);
    assert_eq!(v["energy_budgets"]["inf"], "inf");
}

#[test]
fn usage_and_config_errors_exit_two() {
    assert_eq!(critsys(&["constants", "-D", "dim=2"]).status.code(), Some(2));
    assert_eq!(critsys(&["constants", "-D", "alpha=1.5", "-D", "beta=2"]).status.code(), Some(2));
    assert_eq!(critsys(&["flow", "--config", "/nonexistent/x.cfg"]).status.code(), Some(2));
    assert_eq!(critsys(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "dim = 4\nthis line is broken\n").unwrap();
    let out = critsys(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"config\""));
}

#[test]
fn sync_row_for_symmetric_cooperative_params() {
    let dir = tempfile::tempdir().unwrap();
    let out = critsys(&["sync", "--out", dir.path().to_str().unwrap(), "-D", "lambda=0.25"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("sync.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "r,s,t,residual1,residual2");
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[0] - 1.0).abs() < 1e-9);
    assert!((row[1] - 0.81650).abs() < 1e-4 && (row[2] - 0.81650).abs() < 1e-4);
}

#[test]
fn flow_and_pohozaev_on_annulus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(critsys(&["flow", "--out", d, "--resolution", "128"]).status.code(), Some(0));
    let fields = fs::read_to_string(dir.path().join("fields.csv")).unwrap();
    assert_eq!(fields.lines().next().unwrap(), "r,u,v");
    assert_eq!(fields.lines().count(), 130);
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "iter,energy,gradnorm");
    let m = manifest(dir.path());
    assert_eq!(m["command"], "flow");
    assert_eq!(m["config"]["resolution"], "128");
    assert!(m["assertions"].as_array().unwrap().iter().all(|a| a["passed"] == true));

    let out = critsys(&["pohozaev", "--out", d, "--resolution", "256"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(manifest(dir.path())["report"]["pohozaev_residual"].as_f64().unwrap().abs() < 5e-3);
}

#[test]
fn multi_on_ball_reports_concentration_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = critsys(&[
        "multi",
        "--out",
        dir.path().to_str().unwrap(),
        "--resolution",
        "256",
        "-D",
        "geometry=ball",
        "-D",
        "starts=2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(dir.path());
    let failures = m["report"]["failures"].as_array().unwrap();
    assert!(!failures.is_empty());
    let traces: Vec<&Value> = failures.iter().map(|f| &f["flow"]["concentration"]).collect();
    assert!(traces.iter().any(|t| t.as_array().is_some_and(|a| a.len() >= 2)));
    assert!(String::from_utf8_lossy(&out.stderr).contains("assertion"));
}

#[test]
fn bl_writes_monotone_deficits() {
    let dir = tempfile::tempdir().unwrap();
    let out = critsys(&[
        "bl",
        "--out",
        dir.path().to_str().unwrap(),
        "--resolution",
        "2048",
        "-D",
        "geometry=ball",
        "-D",
        "radius=3",
        "-D",
        "probe_samples=20000",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("deficits.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "scale,product,power,derivative");
    assert_eq!(csv.lines().count(), 5);
    let bad = critsys(&["bl", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(k.to_string());
        let o = critsys(&["sweep", "--out", out.to_str().unwrap(), "--seed", "3", "--resolution", "128"]);
        assert_eq!(o.status.code(), Some(0));
        runs.push((fs::read(out.join("sweep.csv")).unwrap(), fs::read(out.join("fields.csv")).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    let header = String::from_utf8(runs[0].0.clone()).unwrap();
    assert!(header.starts_with("lambda,overlap,energy,omega1_lo,omega1_hi,omega2_lo,omega2_hi\n"));
}
