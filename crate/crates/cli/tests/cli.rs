use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_superres"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn spec() -> Value {
    json!({"n_tx": 2, "n_rx": 2, "signal_len": 9})
}

#[test]
fn simulate_then_recover_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let targets = json!([
        {"gain": [0.7, -0.2], "loc": {"beta": 0.25, "tau": 2.0 / 9.0, "nu": 5.0 / 9.0}},
        {"gain": [-0.4, 0.6], "loc": {"beta": 0.75, "tau": 7.0 / 9.0, "nu": 1.0 / 9.0}}
    ]);
    let cfg = write(
        dir.path(),
        "sim.json",
        &json!({"schema_version": 1, "spec": spec(), "scene": {"targets": targets}}),
    );
    let meas = dir.path().join("m.json");
    let out = run(&["simulate", "--config", s(&cfg), "--seed", "3", "--out", s(&meas)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let sol = dir.path().join("r.json");
    let out = run(&["recover", s(&meas), "--out", s(&sol)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read(&sol);
    assert_eq!(r["method"], "l1");
    let found = r["targets"].as_array().unwrap();
    assert_eq!(found.len(), 2);
    for truth in targets.as_array().unwrap() {
        let hit = found.iter().any(|t| {
            ["beta", "tau", "nu"]
                .iter()
                .all(|k| (t["loc"][k].as_f64().unwrap() - truth["loc"][k].as_f64().unwrap()).abs() < 1e-9)
                && (0..2).all(|i| (t["gain"][i].as_f64().unwrap() - truth["gain"][i].as_f64().unwrap()).abs() < 1e-3)
        });
        assert!(hit, "missing {truth}");
    }
}

#[test]
fn noisy_measurement_defaults_to_l1_err() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.json",
        &json!({"schema_version": 1, "spec": spec(), "snr_db": 20.0,
                "scene": {"targets": [{"gain": [1.0, 0.0], "loc": {"beta": 0.5, "tau": 1.0 / 3.0, "nu": 0.0}}]}}),
    );
    let meas = dir.path().join("m.json");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&meas)]).status.success());
    let m = read(&meas);
    assert!(m["noise_energy"].as_f64().unwrap() > 0.0);
    let out = run(&["recover", s(&meas)]);
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["method"], "l1_err");
    assert!(!r["targets"].as_array().unwrap().is_empty());
}

#[test]
fn certify_reports_violation_as_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cert.json",
        &json!({"schema_version": 1, "spec": {"n_tx": 3, "n_rx": 3, "signal_len": 9},
                "density": [18, 18, 18],
                "scene": {"targets": [
                    {"gain": [1.0, 0.0], "loc": {"beta": 0.30, "tau": 0.30, "nu": 0.30}},
                    {"gain": [0.0, 1.0], "loc": {"beta": 0.31, "tau": 0.31, "nu": 0.31}}
                ]}}),
    );
    let out = run(&["certify", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["separation"]["ok"], false);
    assert_eq!(r["passed"], false);
}

#[test]
fn invalid_config_exits_one_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.json",
        &json!({"schema_version": 1, "spec": spec(), "scene": {"kind": "random_box"},
                "targets": 1, "solver": {"max_iter": "many"}}),
    );
    let out = run(&["experiment", "srf-sweep", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("solver.max_iter"), "{err}");

    let cfg = write(
        dir.path(),
        "sim.json",
        &json!({"schema_version": 1, "spec": {"n_tx": 2, "n_rx": 2, "signal_len": 8}, "scene": {"targets": []}}),
    );
    let out = run(&["simulate", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spec"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["simulate"]).status.code(), Some(1));
    assert_eq!(run(&["recover", "/nonexistent/m.json"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn srf_sweep_writes_csv_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.json",
        &json!({"schema_version": 1, "spec": spec(), "srf": [1, 2], "snr_db": [null, 20],
                "scene": {"kind": "random_box", "on_grid": true}, "targets": 1, "trials": 2, "seed": 9}),
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&["experiment", "srf-sweep", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("srf,snr_db,mean_err,stderr,trials\n"));
    assert_eq!(text.lines().count(), 5);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn iaa_compare_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.json",
        &json!({"schema_version": 1, "spec": spec(), "srf": [2], "snr_db": [30],
                "scene": {"kind": "equispaced"}, "targets": 2, "trials": 2}),
    );
    let o = run(&["experiment", "iaa-compare", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "snr_db,method,mean_err,stderr");
    assert_eq!(lines.len(), 3);
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("selftest.json");
    let o = run(&["selftest", "--seed", "1", "--out", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read(&report);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}
