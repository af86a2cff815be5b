use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const MINIMAL: &str = r#"{
    "sim": { "profile": { "type": "CONSTANT", "level": 400 }, "t_end": 1, "log_stride": 50 },
    "gains": { "k1": 0.7, "k2": 2, "k3": 30, "k4": 2.5, "mapping": "ASCENDING" }
}"#;

fn moldctl(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_moldctl"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_trajectory_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = moldctl(&["simulate"], MINIMAL, dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let mut rd = csv::Reader::from_path(dir.path().join("out/trajectory.csv")).unwrap();
    assert_eq!(
        rd.headers().unwrap(),
        vec![
            "t",
            "x1",
            "x2",
            "x3",
            "x4",
            "x5",
            "yd",
            "e",
            "u",
            "v",
            "saturated"
        ]
    );
    let rows: Vec<_> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10_000 / 50 + 1);
    assert_eq!(&rows[0][1], "10");

    let m = read_json(dir.path().join("out/metrics.json"));
    assert_eq!(m["status"], "COMPLETED");
    assert_eq!(m["settled"], false);
    assert!(m["metrics"]["settling_time_2pct"].is_null());
    assert_eq!(m["assumed"]["plant.v_sp"], 1.0);
    assert_eq!(
        m["assumed"]["sim.x0"],
        serde_json::json!([10.0, 0.0, 0.0, 0.0, 0.0])
    );
    assert!(m["assumed"].get("tune.budget").is_none());
    assert_eq!(m["config"]["gains"]["mapping"], "ASCENDING");
}

#[test]
fn invalid_radius_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = MINIMAL.replace(r#""sim""#, r#""plant": { "R": -1 }, "sim""#);
    let out = moldctl(&["simulate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("R > 0"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_key_exits_1_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = MINIMAL.replace(r#""t_end""#, r#""foo": 1, "t_end""#);
    let out = moldctl(&["verify"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sim.foo") && err.contains("line 2"), "{err}");
}

#[test]
fn descending_singularity_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = MINIMAL
        .replace("ASCENDING", "DESCENDING")
        .replace(r#""t_end": 1"#, r#""t_end": 10"#);
    let out = moldctl(&["simulate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let m = read_json(dir.path().join("out/metrics.json"));
    assert_eq!(m["status"], "SINGULARITY_ABORT");
    assert!(m["metrics"].is_null());
    let t_stop = m["t_stop"].as_f64().unwrap();
    assert!(t_stop > 1.0 && t_stop < 10.0, "{t_stop}");
}

#[test]
fn verify_and_stability_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = moldctl(&["verify"], MINIMAL, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(dir.path().join("out/verification.json"));
    assert_eq!(v["report"]["pass"], true);
    assert_eq!(v["report"]["samples"], 100);
    assert_eq!(v["report"]["published_forms"]["consistent"], false);

    let out = moldctl(&["stability"], MINIMAL, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = read_json(dir.path().join("out/routh.json"));
    let verdicts: Vec<(&str, &str)> = r["mappings"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| {
            (
                m["mapping"].as_str().unwrap(),
                m["verdict"].as_str().unwrap(),
            )
        })
        .collect();
    assert!(verdicts.contains(&("DESCENDING", "UNSTABLE")));
    assert!(verdicts.contains(&("ASCENDING", "STABLE")));
}

#[test]
fn grid_tune_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = MINIMAL.replace(
        r#""gains""#,
        r#""tune": { "method": "GRID", "grid_points": 2, "bounds": [[0.5, 2], [1, 4], [5, 40], [2, 4]] }, "gains""#,
    );
    let out = moldctl(&["tune"], &cfg, dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut rd = csv::Reader::from_path(dir.path().join("out/tune_trace.csv")).unwrap();
    assert_eq!(
        rd.headers().unwrap(),
        vec!["eval", "k1", "k2", "k3", "k4", "cost", "best_so_far"]
    );
    assert_eq!(rd.records().count(), 16);
    let best = read_json(dir.path().join("out/best_gains.json"));
    assert_eq!(best["feasible"], true);
    assert_eq!(best["evaluations"], 16);
}

#[test]
fn missing_config_file_exits_1() {
    let out = Command::new(env!("CARGO_BIN_EXE_moldctl"))
        .args(["simulate", "--config", "/nonexistent/moldctl.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
