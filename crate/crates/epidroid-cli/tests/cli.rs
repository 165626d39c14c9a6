//! End-to-end CLI checks: subcommands, artifacts on disk, and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn epidroid() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epidroid"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("epidroid_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn run_emits_all_artifacts_and_exits_zero() {
    let out = temp_dir("run");
    let status = epidroid()
        .args(["run", "--app"])
        .arg(fixture("case2_newpipe.app.json"))
        .args(["--seed", "7", "--mode", "epidroid", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["report.json", "curve.csv", "fragments.json", "mses.json", "semantic_utg.json", "summary.txt"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    // The report carries the required schema fields.
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for key in [
        "app_id", "mode", "seed", "warmup", "final_metrics", "enhancement_delta_acc",
        "iterations", "signals", "confirmed_dependencies", "rsr", "total_branches", "timestamp",
    ] {
        assert!(report.get(key).is_some(), "report.json missing `{key}`");
    }
    // Curve rows match executed events.
    let curve = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    let rows = curve.lines().count() - 1;
    assert_eq!(rows as u64, report["final_metrics"]["events"].as_u64().unwrap());

    // `report` re-prints the summary.
    let output = epidroid().args(["report", "--out"]).arg(&out).output().unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("case2_newpipe"));
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn explore_then_stabilize_round_trips_through_files() {
    let out = temp_dir("explore");
    let status = epidroid()
        .args(["explore", "--app"])
        .arg(fixture("case1_player_settings.app.json"))
        .args(["--events", "200", "--explorer", "frontier", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let trace = out.join("trace.jsonl");
    assert!(trace.exists());
    let first_line = std::fs::read_to_string(&trace).unwrap();
    let record: serde_json::Value = serde_json::from_str(first_line.lines().next().unwrap()).unwrap();
    for key in ["i", "pre", "event", "post", "cov", "pre_c", "post_c"] {
        assert!(record.get(key).is_some(), "trace record missing `{key}`");
    }

    let status = epidroid()
        .args(["stabilize", "--app"])
        .arg(fixture("case1_player_settings.app.json"))
        .args(["--trace"])
        .arg(&trace)
        .args(["--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("fragments.json").exists());
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn missing_app_file_exits_3() {
    let status = epidroid()
        .args(["run", "--app", "/definitely/not/here.json"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn invalid_mode_exits_2() {
    let status = epidroid()
        .args(["run", "--app"])
        .arg(fixture("case1_player_settings.app.json"))
        .args(["--mode", "bogus"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn invalid_model_exits_2() {
    let dir = temp_dir("badmodel");
    let bad = dir.join("bad.app.json");
    std::fs::write(&bad, r#"{"app_id":"x","entry_page":"missing","variables":[],"pages":[],"transitions":[]}"#)
        .unwrap();
    let status = epidroid().args(["run", "--app"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn remote_reasoner_without_endpoint_exits_2() {
    let status = epidroid()
        .args(["run", "--app"])
        .arg(fixture("case1_player_settings.app.json"))
        .args(["--reasoner", "remote"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
