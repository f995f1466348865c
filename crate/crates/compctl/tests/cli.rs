use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn compctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compctl")).args(args).env_remove("COMPCTL_SEED").output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_reports_boeing_level() {
    let dir = tempfile::tempdir().unwrap();
    let ctrl = dir.path().join("c.json");
    let out = compctl(&[
        "synth", "--plant", "boeing", "--mode", "competitive", "--horizon", "infinite", "--optimize-gamma", "--tol", "1e-3",
        "--out", path(&ctrl),
    ]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    let g2 = report["gamma_squared"].as_f64().unwrap();
    assert!((g2 - 1.77).abs() <= 0.02, "{g2}");
    assert!(report["diagnostics"]["riccati_residual"].as_f64().unwrap() < 1e-6);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&ctrl).unwrap()).unwrap();
    assert_eq!(saved["schema_version"], 1);
    assert_eq!(saved["gamma"], report["gamma"]);
}

#[test]
fn h2_controller_has_no_level() {
    let dir = tempfile::tempdir().unwrap();
    let ctrl = dir.path().join("h2.json");
    assert!(compctl(&["synth", "--plant", "boeing", "--mode", "h2", "--out", path(&ctrl)]).status.success());
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&ctrl).unwrap()).unwrap();
    assert!(saved.get("gamma").is_none());
    assert_eq!(saved["kind"], "h2");
}

#[test]
fn infeasible_level_exits_2_with_verdict() {
    let out = compctl(&["synth", "--plant", "boeing", "--mode", "hinf", "--gamma", "0.0001"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stdout_json(&out);
    assert_eq!(err["error"]["verdict"], "infeasible");
    assert!(err["error"]["reason"].is_string());
}

#[test]
fn bad_plant_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let plant = dir.path().join("p.json");
    std::fs::write(&plant, r#"{"A": [[1, 2]], "Bu": [[1]], "Bw": [[1]], "Q": [[1]]}"#).unwrap();
    let out = compctl(&["synth", "--plant", path(&plant), "--mode", "h2"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["schema_version"], 1);
}

#[test]
fn zero_disturbance_gives_zero_cost() {
    let dir = tempfile::tempdir().unwrap();
    let out = compctl(&[
        "simulate", "--plant", "boeing", "--controllers", "h2,hinf,competitive", "--gamma-hinf", "50", "--disturbance",
        r#"{"kind": "white-gaussian", "sigma": 0}"#, "--steps", "50", "--out", path(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report = stdout_json(&out);
    for row in report["controllers"].as_array().unwrap() {
        assert_eq!(row["total_cost"], 0.0, "{row}");
        assert_eq!(row["ratio_to_opt"], 1.0);
    }
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |d: &Path| {
        vec![
            "simulate".to_string(), "--plant".into(), "boeing".into(), "--controllers".into(), "h2,competitive".into(),
            "--disturbance".into(), r#"{"kind": "white-gaussian"}"#.into(), "--steps".into(), "100".into(),
            "--out".into(), path(d).to_string(),
        ]
    };
    let mut first = args(a.path());
    first.extend(["--seed".to_string(), "7".into()]);
    assert!(compctl(&first.iter().map(String::as_str).collect::<Vec<_>>()).status.success());
    // same seed through the environment variable
    let status = Command::new(env!("CARGO_BIN_EXE_compctl")).args(args(b.path())).env("COMPCTL_SEED", "7").status().unwrap();
    assert!(status.success());
    for f in ["offline.csv", "h2.csv", "competitive.csv", "comparison.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn freq_h2_ratio_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let out = compctl(&["freq", "--plant", "boeing", "--controllers", "h2", "--grid", "128", "--out", path(dir.path())]);
    assert!(out.status.success());
    let mut r = csv::Reader::from_path(dir.path().join("freq.csv")).unwrap();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let v: f64 = rec[3].parse().unwrap();
        assert!((v - 2.8).abs() <= 0.15, "{v}");
        rows += 1;
    }
    assert_eq!(rows, 128);
    let ext: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("extremal.json")).unwrap()).unwrap();
    assert_eq!(ext["controllers"][0]["worst"]["kind"], "dc");
}

#[test]
fn verify_random_plant_passes() {
    let out = compctl(&["verify", "--random", "11", "--dims", "3,2,2"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().all(|l| l.starts_with("pass") || l.starts_with("skipped")));
}

#[test]
fn mpc_step_scenario_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("step.json");
    std::fs::write(
        &scenario,
        r#"{"params": {"m": 1, "l": 1, "g": 1, "J": 1, "dt": 0.001}, "steps": 1001,
            "disturbance": {"kind": "step", "levels": [1, -1], "switch_times": [500]},
            "controllers": [{"kind": "h2"}, {"kind": "competitive", "gamma_policy": {"kind": "optimal-times", "factor": 1.01}}]}"#,
    )
    .unwrap();
    let out = compctl(&["mpc", "--scenario", path(&scenario), "--out", path(&dir.path().join("out"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report = stdout_json(&out);
    let cost = |name: &str| {
        report["controllers"].as_array().unwrap().iter().find(|r| r["name"] == name).unwrap()["total_cost"].as_f64().unwrap()
    };
    assert!(cost("competitive") >= cost("offline"));
    let header = std::fs::read_to_string(dir.path().join("out/competitive.csv")).unwrap();
    assert!(header.starts_with("t,w_0,wprime_0,wprime_1,x_0,x_1,u_0,step_cost,cum_cost\n"));
}
