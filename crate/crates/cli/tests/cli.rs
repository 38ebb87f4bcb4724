use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn default_calibration() -> PathBuf {
    repo().join("calibration/default.json")
}

fn run(args: &[&str], config: &str, out: &Path) -> Output {
    let cfg = out.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_hopflab"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

const FLAT: &str = r#"{"schema": "hopflab.experiment/1", "growth": {"graph": {"family": "zero"}, "k_max": 4}}"#;

#[test]
fn flat_growth_has_unit_quotients() {
    let dir = tempfile::tempdir().unwrap();
    let cal = default_calibration();
    let out = run(&["growth", "--calibration", cal.to_str().unwrap()], FLAT, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("growth.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("k,r_k,q_k"));
    for line in lines {
        let q: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((q - 1.0).abs() < 1e-10, "{line}");
    }
}

#[test]
fn barrier_check_on_a_shallow_cone_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cal = default_calibration();
    let cfg = r#"{"schema": "hopflab.experiment/1", "seed": 7,
        "barrier_check": {"graph": {"family": "cone", "L": 0.05}, "r": 0.25, "samples": 300}}"#;
    let out = run(&["barrier-check", "--calibration", cal.to_str().unwrap()], cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("barrier-check.json").exists());
}

#[test]
fn negative_lambda_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"schema": "hopflab.experiment/1", "solve": {"graph": {"family": "zero"}, "h": 0.0625,
        "operator": {"kind": "pucci_minus", "ellipticity": {"lambda": -1.0, "Lambda": 2.0}}}}"#;
    let out = run(&["solve"], cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
}

#[test]
fn missing_calibration_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["growth", "--calibration", "/nonexistent/calibration.json"], FLAT, dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let cal = default_calibration();
    let cfg = r#"{"schema": "hopflab.experiment/1", "growth": {"graph": {"family": "cone", "L": 0.1}, "k_max": 4}}"#;
    let outputs: Vec<(String, String)> = ["1", "3"]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            let out = run(&["growth", "--calibration", cal.to_str().unwrap(), "--threads", threads], cfg, dir.path());
            assert_eq!(out.status.code(), Some(0));
            (
                fs::read_to_string(dir.path().join("growth.csv")).unwrap(),
                fs::read_to_string(dir.path().join("growth.json")).unwrap(),
            )
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn calibrate_then_growth() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal.json");
    let cfg = r#"{"schema": "hopflab.experiment/1", "seed": 3, "calibrate":
        {"regdist_points": 100, "regdist_points_3d": 20, "barrier_samples": 200, "special_h": 0.015625}}"#;
    let out = run(&["calibrate", "--calibration", cal.to_str().unwrap()], cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let written = fs::read_to_string(&cal).unwrap();
    assert!(written.contains("hopflab.calibration/1"));
    let out = run(&["growth", "--calibration", cal.to_str().unwrap()], FLAT, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
