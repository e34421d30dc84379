//! End-to-end checks of the `ioc` binary: subcommands, config loading,
//! output files and the `--check` exit-code contract.

use std::path::Path;
use std::process::Command;

fn ioc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ioc"))
}

fn small_lqr_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let text = r#"{
        "experiment": "small-lqr",
        "system": "lqr",
        "lqr": {"a": [[-1.0, 1.0], [0.0, 1.0]], "b": [[1.0], [3.0]]},
        "T": 40,
        "features": [
            {"kind": "state", "index": 1, "power": 2},
            {"kind": "state", "index": 2, "power": 2},
            {"kind": "input", "index": 1, "power": 2}
        ],
        "weights": [0.507, 0.845, 0.169],
        "x_start": [2.0, -2.0],
        "seed": 7,
        "start_times": [1, 3]
    }"#;
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn generate_lqr_writes_a_parseable_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = ioc()
        .args(["generate-lqr", "--check"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("k,x1,x2,u1\n"));
    // The k = 0 row has an empty input field.
    assert!(csv.lines().nth(1).unwrap().ends_with(','));
    let traj = recovery_ioc::trajectory::Trajectory::from_csv(&csv).unwrap();
    assert_eq!(traj.horizon(), 100);
}

#[test]
fn recover_emits_report_and_kappa_history() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_lqr_config(dir.path());
    let out = dir.path().join("out");
    let status = ioc()
        .args(["recover", "--start", "1", "--check"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["t"], 1);
    assert_eq!(report["status"], "ok");
    assert!(report["l_min"].as_u64().unwrap() <= 25);
    let omega = report["omega"].as_array().unwrap();
    assert_eq!(omega.len(), 3);
    let sum: f64 = omega.iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-10);
    assert_eq!(report["lambda"].as_array().unwrap().len(), 2);
    assert!(report["kappa_history"].is_array());
    assert!(report["e_omega"].as_f64().unwrap() < 1e-3);

    let kappa = std::fs::read_to_string(out.join("kappa.csv")).unwrap();
    assert!(kappa.starts_with("l,kappa\n"));
}

#[test]
fn compare_kkt_writes_curves_and_respects_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_lqr_config(dir.path());
    let out = dir.path().join("out");
    let status = ioc()
        .args(["compare-kkt", "--check"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let csv = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(csv.starts_with("start,l,e_recovery,e_kkt\n"));
    // Only the two configured start times appear.
    let starts: std::collections::BTreeSet<&str> = csv
        .lines()
        .skip(1)
        .map(|line| line.split(',').next().unwrap())
        .collect();
    assert_eq!(starts.into_iter().collect::<Vec<_>>(), vec!["1", "3"]);
    assert!(out.join("crossings.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_lqr_config(dir.path());
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&out_a, &out_b] {
        let status = ioc()
            .args(["compare-kkt"])
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(out_a.join("comparison.csv")).unwrap();
    let b = std::fs::read(out_b.join("comparison.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, "{\"system\": \"lqr\"").unwrap();
    let status = ioc()
        .args(["generate-lqr"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
