use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn fahv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fahv")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_trajectory_metrics_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("retuned_q_observer.toml");
    let out = fahv(&["run", "--scenario", path(&sc), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectory.csv", "metrics.txt", "scenario.toml", "errors.svg", "commands.svg", "disturbances.svg", "angles.svg"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,V,h,"));
    assert_eq!(csv.lines().count(), 10_002);
    let metrics = fs::read_to_string(dir.path().join("metrics.txt")).unwrap();
    assert!(metrics.starts_with("status = \"ok\""));
}

#[test]
fn invalid_parameters_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("nominal.toml");
    let o = path(dir.path());
    let bad_dt = fahv(&["run", "--scenario", path(&sc), "--out", o, "--set", "dt=0"]);
    assert_eq!(bad_dt.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_dt.stderr).contains("dt"));
    let missing = fahv(&["run", "--scenario", "no/such/file.toml", "--out", o]);
    assert_eq!(missing.status.code(), Some(2));
    let bad_key = fahv(&["run", "--scenario", path(&sc), "--out", o, "--set", "gains.bogus=1"]);
    assert_eq!(bad_key.status.code(), Some(2));
    assert!(!dir.path().join("trajectory.csv").exists());
}

#[test]
fn failed_run_exits_one_and_keeps_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("large_initial_error.toml");
    let out = fahv(&["run", "--scenario", path(&sc), "--out", path(dir.path()), "--no-plot"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("trajectory.csv").is_file());
    assert!(!dir.path().join("errors.svg").exists());
    let metrics = fs::read_to_string(dir.path().join("metrics.txt")).unwrap();
    assert!(metrics.starts_with("status = \"failed\""));
}

#[test]
fn compare_reports_baseline_breach() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("retuned_q_observer.toml");
    let out = fahv(&[
        "compare", "--scenario", path(&sc), "--out", path(dir.path()), "--set", "duration=40",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("comparison.txt")).unwrap();
    let baseline = table.lines().find(|l| l.starts_with("baseline")).unwrap();
    assert!(baseline.contains("BoundBreach"), "{table}");
    assert!(table.lines().any(|l| l.starts_with("proposed") && l.ends_with("ok")));
    assert!(dir.path().join("compare_errors.svg").is_file());
    assert!(dir.path().join("proposed/trajectory.csv").is_file());
    assert!(dir.path().join("baseline/trajectory.csv").is_file());
}

#[test]
fn sweep_runs_every_cell_deterministically() {
    let sc = scenario("retuned_q_observer.toml");
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = fahv(&[
            "sweep", "--scenario", path(&sc), "--out", path(dir.path()), "--no-plot",
            "--set", "duration=35", "--grid", "initial.v_error=4,8", "--grid", "initial.h_error=10,20",
            "--jobs", "2",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        for i in 0..4 {
            assert!(dir.path().join(format!("cell_{i:03}/trajectory.csv")).is_file());
        }
        let csv = fs::read_to_string(dir.path().join("cell_003/trajectory.csv")).unwrap();
        (fs::read_to_string(dir.path().join("sweep.csv")).unwrap(), csv)
    };
    let (a, csv_a) = run();
    assert_eq!(a.lines().count(), 5);
    assert!(a.contains("initial.v_error=8 initial.h_error=20"));
    let (b, csv_b) = run();
    assert_eq!(csv_a, csv_b);
    assert_eq!(a, b);
}

#[test]
fn check_flags_a_wrong_slack_constant() {
    let out = fahv(&["check", "--set", "lemma3.c=0.5"]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find(|l| l.split_whitespace().nth(1) == Some("1")).unwrap();
    assert!(line.starts_with("FAIL"), "{stdout}");
    assert!(stdout.contains("criteria passed"));
}
