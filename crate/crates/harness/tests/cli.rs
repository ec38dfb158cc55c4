mod common;

use std::process::Command;

use common::*;
use mks_harness::cli::run;
use serde_json::Value;

fn mks(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("mks").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn scf_writes_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config_path("si1d");
    let (code, stdout, _) = mks(&["scf", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 0, "{stdout}");
    assert!(dir.path().join("checkpoint.json").exists());
    let log = std::fs::read_to_string(dir.path().join("scf_log.csv")).unwrap();
    assert!(log.lines().count() > 2);
    // the same run in JSON form
    let (code, stdout, _) = mks(&["scf", "--config", cfg.to_str().unwrap(), "--out", out, "--json"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["converged"], true);
    assert!(v["residual_fixedpoint"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn sweep_emits_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_path("si1d");
    let (code, stdout, stderr) = mks(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--cutoffs", "10,15,20,25,30", "--reference", "80",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("ec,f_total,f_err,rho_l2_err,gamma_s11_err,proj_err,ratio,scf_iters,wall_s\n"));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for key in ["config_hash", "model", "slope", "intercept", "r2", "max_ratio", "a4"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
    assert_eq!(summary["model"], "exponential");
}

#[test]
fn missing_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.cfg");
    let text: String = config_text("si1d").lines().filter(|l| !l.starts_with("count")).collect::<Vec<_>>().join("\n");
    std::fs::write(&path, text).unwrap();
    let (code, _, stderr) = mks(&["scf", "--config", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("electrons.count"), "{stderr}");

    let (code, _, stderr) = mks(&["scf", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("x.cfg"));
    let (code, _, _) = mks(&["frobnicate", "--config", "x"]);
    assert_eq!(code, 2);
    let (code, _, _) = mks(&["sweep"]);
    assert_eq!(code, 2);
    let (code, _, _) = mks(&["sweep", "--config", config_path("si1d").to_str().unwrap(), "--cutoffs", "10,20,a"]);
    assert_eq!(code, 2);
}

#[test]
fn nonconvergence_exits_with_physics_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.cfg");
    std::fs::write(&path, config_text("si1d").replace("max_iterations = 200", "max_iterations = 2")).unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, _) = mks(&["scf", "--config", path.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 1, "{stdout}");
    let (code, _, stderr) = mks(&["sweep", "--config", path.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 1);
    assert!(stderr.contains("cutoff"), "{stderr}");
}

#[test]
fn audit_reports_the_a4_fields() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = mks(&["audit", "--config", config_path("rhf1d").to_str().unwrap(), "--json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["denominator_s", "g_sign", "kappa", "lambda_min", "tangent_dim"]);
    assert!(v["lambda_min"].as_f64().unwrap() >= 1.0 - 1e-10);
    assert_eq!(v["g_sign"], "paper");
}

#[test]
fn response_audit_xc_and_quasi_opt_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for cfg in ["si1d", "rhf1d"] {
        let (code, stdout, _) = mks(&["response", "--config", config_path(cfg).to_str().unwrap(), "--json", "--out", out]);
        assert_eq!(code, 0, "{stdout}");
        let v: Value = serde_json::from_str(&stdout).unwrap();
        assert_eq!(v["passed"], true);
    }
    let (code, stdout, _) = mks(&["audit-xc", "--config", config_path("si1d").to_str().unwrap(), "--json"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["passed"], true);
    let (code, stdout, _) = mks(&["audit-xc", "--config", config_path("free1d").to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("no exchange"));
    let (code, stdout, _) = mks(&["quasi-opt", "--config", config_path("si1d").to_str().unwrap(), "--out", out]);
    assert_eq!(code, 0, "{stdout}");
    assert_eq!(std::fs::read_to_string(dir.path().join("quasi_opt.csv")).unwrap().lines().count(), 6);
}

#[test]
fn binary_honours_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_mks");
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(bin)
        .args(["scf", "--config", config_path("free1d").to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .env("MKS_THREADS", "1")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let out = Command::new(bin).args(["scf", "--config", "missing.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("quasi-opt"));
}
