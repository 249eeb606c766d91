//! Exit codes, error rendering, and report content of the command line.

use std::path::PathBuf;
use std::process::{Command, Output};

fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn coopex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coopex"))
        .args(args)
        .current_dir(workspace_root())
        .output()
        .expect("binary runs")
}

#[test]
fn classify_reports_the_fixture_verdicts() {
    let out = coopex(&[
        "classify",
        "--network",
        "fixtures/futile_cycle.json",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["report"]["system_verdict"], "Cooperative");
    assert_eq!(value["report"]["pairs"].as_array().unwrap().len(), 6);
    for pair in value["report"]["pairs"].as_array().unwrap() {
        assert_eq!(pair["verdict"], "Cooperative");
        assert_eq!(pair["basis"], "Proposition 3");
    }
    assert_eq!(value["command"], "classify");
    assert!(value["inputs"]["network"]["sha256"].as_str().unwrap().len() == 64);
    assert!(value["version"].as_str().is_some());

    let out = coopex(&[
        "classify",
        "--network",
        "fixtures/parallel.json",
        "--format",
        "json",
    ]);
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["report"]["system_verdict"], "Competitive");
    assert_eq!(value["report"]["pairs"][0]["basis"], "Proposition 2");
    assert_eq!(
        value["report"]["pairs"][0]["reactions"],
        serde_json::json!([1, 2])
    );
}

#[test]
fn effect_signs_use_the_compact_encoding() {
    let out = coopex(&[
        "classify",
        "--network",
        "fixtures/chemostat.json",
        "--flows",
        "fixtures/chemostat_flows.json",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["report"]["inlet_effects"][0][0], "+");
    assert_eq!(value["report"]["ic_effects"][0], "+");
}

#[test]
fn invalid_network_exits_one_and_names_the_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{
            "species": [
                {"name": "A", "molecular_weight": 1.0},
                {"name": "B", "molecular_weight": 1.0}
            ],
            "reactions": [
                {"stoichiometry": {"A": -1.0, "B": 1.0},
                 "rate_law": {"k_f": 1.0, "fwd_exponents": {"A": 1.0}}}
            ],
            "inlets": [{"weight_fractions": {"A": 0.9}}],
            "initial_moles": {"A": 1.0}
        }"#,
    )
    .unwrap();
    let out = coopex(&["validate", "--network", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("weight fractions of inlet 1 sum to 0.9"),
        "stdout: {text}"
    );
}

#[test]
fn schema_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unknown_key.json");
    std::fs::write(
        &path,
        r#"{"species": [], "reactions": [], "surprise": true}"#,
    )
    .unwrap();
    let out = coopex(&["classify", "--network", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("surprise"), "stderr: {err}");

    // missing file is also an input error
    let out = coopex(&["classify", "--network", "no_such_file.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_network_blocks_other_commands_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{
            "species": [{"name": "A", "molecular_weight": 1.0}],
            "reactions": [
                {"stoichiometry": {"A": -1.0},
                 "rate_law": {"k_f": 1.0}}
            ],
            "inlets": [],
            "initial_moles": {}
        }"#,
    )
    .unwrap();
    let out = coopex(&["classify", "--network", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no products"), "stderr: {err}");
}

#[test]
fn simulate_writes_trajectories_with_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = coopex(&[
        "simulate",
        "--network",
        "fixtures/series.json",
        "--t1",
        "1.0",
        "--dt",
        "0.1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let extents = std::fs::read_to_string(dir.path().join("trajectory_extents.csv")).unwrap();
    assert!(extents.starts_with("t,x_r1,x_r2,lambda,x_iv1\n"));
    assert_eq!(extents.lines().count(), 12);
    let moles = std::fs::read_to_string(dir.path().join("trajectory_moles.csv")).unwrap();
    assert!(moles.starts_with("t,n_A,n_B,n_C,n_D,m\n"));
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn bad_settings_are_rejected() {
    let out = coopex(&[
        "simulate",
        "--network",
        "fixtures/series.json",
        "--dt",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
