use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn fastdata(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastdata"))
        .args(args)
        .env_remove("FASTDATA_SEED")
        .env_remove("FASTDATA_MODE")
        .env_remove("FASTDATA_OUT")
        .env_remove("FASTDATA_CONFIG")
        .env_remove("FASTDATA_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report JSON on stdout")
}

fn key(e: &Value) -> (String, f64, f64) {
    (e["attributes"].to_string(), e["ao"].as_f64().unwrap(), e["ai"].as_f64().unwrap())
}

#[test]
fn sample_run_matches_brute_force_expectation() {
    let cfg = data_dir().join("sample.json");
    let out = fastdata(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(data_dir().join("sample_expected.json")).unwrap()).unwrap();
    assert_eq!(r["pointsProcessed"], expected["points"]);
    assert_eq!(r["outlierCount"], expected["outlierCount"]);
    assert!((r["cutoff"].as_f64().unwrap() - expected["cutoff"].as_f64().unwrap()).abs() < 1e-9);
    let got: Vec<_> = r["explanations"].as_array().unwrap().iter().map(key).collect();
    let want: Vec<_> = expected["explanations"].as_array().unwrap().iter().map(key).collect();
    assert!(!got.is_empty());
    assert_eq!(got, want);
}

#[test]
fn missing_config_exits_2() {
    let out = fastdata(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read config"));
}

#[test]
fn invalid_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"source":{"kind":"syntheticDevices"},"minRiskRatio":-1}"#).unwrap();
    let out = fastdata(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("minRiskRatio"));
}

#[test]
fn degenerate_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..50).map(|i| format!("1.0,2.0,d{}\n", i % 3)).collect();
    std::fs::write(dir.path().join("d.csv"), format!("power,temp,device\n{rows}")).unwrap();
    let cfg = dir.path().join("q.json");
    std::fs::write(
        &cfg,
        r#"{"source":{"kind":"csvFile","path":"d.csv"},"metricColumns":["power","temp"],"attributeColumns":["device"]}"#,
    )
    .unwrap();
    let out = fastdata(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seed_override_only_changes_seed_for_file_sources() {
    let cfg = data_dir().join("sample.json");
    let a = report(&fastdata(&["run", "--config", cfg.to_str().unwrap()]));
    let b = report(&fastdata(&["run", "--config", cfg.to_str().unwrap(), "--seed", "99"]));
    assert_eq!(b["seed"], 99);
    assert_eq!(b["config"]["randomSeed"], 99);
    assert_eq!(a["explanations"], b["explanations"]);
}

#[test]
fn env_overrides_flags() {
    let cfg = data_dir().join("sample.json");
    let out = Command::new(env!("CARGO_BIN_EXE_fastdata"))
        .args(["run"])
        .env("FASTDATA_CONFIG", &cfg)
        .env("FASTDATA_SEED", "5")
        .env_remove("FASTDATA_OUT")
        .env_remove("FASTDATA_MODE")
        .env_remove("FASTDATA_DATA_DIR")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["seed"], 5);
}

#[test]
fn out_flag_writes_file_and_streaming_mode_runs() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("r.json");
    let log = dir.path().join("emissions.ndjson");
    let cfg = data_dir().join("sample.json");
    let out = fastdata(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "streaming",
        "--out",
        dest.to_str().unwrap(),
        "--emissions",
        log.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&dest).unwrap()).unwrap();
    assert_eq!(r["mode"], "streaming");
    assert_eq!(r["pointsProcessed"], 5000);
    assert!(log.exists());
}

#[test]
fn unknown_experiment_exits_2() {
    let out = fastdata(&["experiment", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn contamination_experiment_writes_headered_csv() {
    let out = fastdata(&["experiment", "contamination", "--scale", "0.05", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "contamination,method,auc,rank_auc,flagged_outliers,flagged_inliers"
    );
    assert_eq!(lines.count(), 18);
}
