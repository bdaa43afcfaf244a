use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gonodyn_core::ScenarioConfig;

fn gonodyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gonodyn")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut full = vec!["--out", dir.to_str().unwrap()];
    full.extend_from_slice(args);
    gonodyn(&full)
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.conf");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn rnumber_prints_verdict_and_discrepancy() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["rnumber"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l == "Re < 1"), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rnumber.json")).unwrap()).unwrap();
    let closed = report["result"]["methods"]["closed-form"].as_f64().unwrap();
    assert!((closed - 0.0097001764).abs() < 5e-11);
    assert_eq!(report["result"]["discrepancy"]["reference_value"].as_f64(), Some(0.09700176367));
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn identical_runs_give_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for cmd in [&["simulate"][..], &["equilibria"], &["rnumber"], &["bifurcate", "--points", "100"], &["perturb"]] {
        assert_eq!(run_in(a.path(), cmd).status.code(), Some(0), "{cmd:?}");
        assert_eq!(run_in(b.path(), cmd).status.code(), Some(0), "{cmd:?}");
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 8);
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn simulate_writes_expected_header() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["simulate", "--t-end", "1"]).status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,Q,S,L,I,R,T,N,lambda"));
    assert_eq!(text.lines().count(), 1 + 21);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(gonodyn(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gonodyn(&[]).status.code(), Some(1));
    assert_eq!(gonodyn(&["bifurcate", "--points", "many"]).status.code(), Some(1));
    assert_eq!(gonodyn(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = ScenarioConfig::reference_text().replace("mu = 0.2", "mu = -0.1");
    let cfg = write_config(dir.path(), &bad);
    let out = run_in(dir.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("`mu`"));

    let cfg = write_config(dir.path(), "");
    assert_eq!(run_in(dir.path(), &["--config", &cfg, "rnumber"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["perturb", "--eps=-1"]).status.code(), Some(2));
}

#[test]
fn numerical_and_io_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let unstable = ScenarioConfig::reference_text().replace("method = adaptive", "method = rk4\ndt = 1");
    let cfg = write_config(dir.path(), &unstable);
    let out = run_in(dir.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());

    let blocker = dir.path().join("not_a_dir");
    fs::write(&blocker, "x").unwrap();
    assert_eq!(gonodyn(&["--out", blocker.to_str().unwrap(), "rnumber"]).status.code(), Some(3));
}

#[test]
fn discrepancy_ledger_lists_known_items() {
    let out = gonodyn(&["--discrepancy-ledger"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("effective reproduction number"));
    assert!(stdout.contains("critical psi"));
}

#[test]
fn stability_at_reference_state() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["stability", "--psi", "0.19904761904761906"]).status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("stability.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["stability"], "stable");
    assert_eq!(report["result"]["eigenvalues"].as_array().unwrap().len(), 6);
}
