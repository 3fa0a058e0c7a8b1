//! The command-line contract: exit codes, report envelope and file layout.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const TWO_PI: f64 = std::f64::consts::TAU;

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_engel-forge"))
}

struct Run {
    code: Option<i32>,
    out: PathBuf,
    _dir: TempDir,
}

impl Run {
    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.out.join(name)).unwrap()).unwrap()
    }

    fn text(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.join(name)).unwrap()
    }

    fn files(&self) -> Vec<String> {
        let Ok(rd) = std::fs::read_dir(&self.out) else {
            return Vec::new();
        };
        let mut names: Vec<String> = rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
        names.sort();
        names
    }
}

fn run_with(verb: &str, config: &str, extra: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let status = exe()
        .arg(verb)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap()
        .status;
    Run { code: status.code(), out, _dir: dir }
}

fn run(verb: &str, config: &str) -> Run {
    run_with(verb, config, &[])
}

/// Compare CSV text against a golden file: identical headers, cells equal to
/// a relative 1e-12.
fn assert_matches_golden(csv: &str, golden: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(golden);
    let want = std::fs::read_to_string(path).unwrap();
    let (got_lines, want_lines): (Vec<&str>, Vec<&str>) = (csv.lines().collect(), want.lines().collect());
    assert_eq!(got_lines.len(), want_lines.len());
    assert_eq!(got_lines[0], want_lines[0]);
    for (g, w) in got_lines[1..].iter().zip(&want_lines[1..]) {
        for (a, b) in g.split(',').zip(w.split(',')) {
            let (a, b): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

const LATITUDE: &str = r#"{"command": "convexity", "curve": {"source": {"kind": "latitude", "c": 0.6}}, "samples": 16}"#;

#[test]
fn empty_config_is_a_usage_error_and_writes_nothing() {
    let r = run("convexity", "");
    assert_eq!(r.code, Some(2));
    assert!(r.files().is_empty());
}

#[test]
fn unknown_fields_and_verb_mismatch_are_usage_errors() {
    let r = run("convexity", r#"{"command": "convexity", "curvature": 1}"#);
    assert_eq!(r.code, Some(2));
    let r = run("surround", LATITUDE);
    assert_eq!(r.code, Some(2));
    assert!(r.files().is_empty());
}

#[test]
fn latitude_is_convex() {
    let r = run("convexity", LATITUDE);
    assert_eq!(r.code, Some(0));
    assert_eq!(r.files(), ["convexity.json", "convexity_curve.svg", "convexity_margin.csv"]);
    let rep = r.json("convexity.json");
    assert_eq!(rep["tool"], "engel-forge");
    assert_eq!(rep["verb"], "convexity");
    assert_eq!(rep["passed"], true);
    assert_eq!(rep["config_hash"].as_str().unwrap().len(), 64);
    let min = rep["result"]["min_det"].as_f64().unwrap();
    let exact = TWO_PI.powi(3) * 0.64 * 0.6;
    assert!((min - exact).abs() <= 1e-12 * exact);
    assert_matches_golden(&r.text("convexity_margin.csv"), "latitude_margin.csv");
}

#[test]
fn great_circle_fails_certification() {
    let r = run("convexity", r#"{"command": "convexity", "curve": {"source": {"kind": "great_circle"}}}"#);
    assert_eq!(r.code, Some(1));
    assert_eq!(r.json("convexity.json")["passed"], false);
}

#[test]
fn great_circle_fiber_matches_closed_form() {
    let r = run("integrate", r#"{"command": "integrate", "curve": {"source": {"kind": "latitude", "c": 0.0}}, "samples": 16}"#);
    assert_eq!(r.code, Some(0));
    let csv = r.text("integrate_fiber.csv");
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let w = TWO_PI * v[0];
        assert!((v[1] - w.sin() / TWO_PI).abs() <= 1e-12);
        assert!((v[2] - (1.0 - w.cos()) / TWO_PI).abs() <= 1e-12);
        assert_eq!(v[3], 0.0);
    }
    assert_matches_golden(&csv, "great_circle_fiber.csv");
}

#[test]
fn computational_errors_leave_an_error_record() {
    let r = run("rebalance", r#"{"command": "rebalance", "curve": {"source": {"kind": "latitude", "c": 0.6}}}"#);
    assert_eq!(r.code, Some(3));
    assert_eq!(r.files(), ["error.json"]);
    let e = r.json("error.json");
    assert_eq!(e["kind"], "NotSurrounding");
    assert_eq!(e["verb"], "rebalance");
}

#[test]
fn latitude_does_not_surround() {
    let r = run("surround", r#"{"command": "surround", "curve": {"source": {"kind": "latitude", "c": 0.6}}}"#);
    assert_eq!(r.code, Some(1));
    assert!(r.text("surround_wiggles.csv").starts_with("a,b,multiplicity,hemisphere,closure_gap,image_gap\n"));
}

#[test]
fn seed_override_is_recorded_and_output_path_is_not_hashed() {
    let a = run_with("convexity", LATITUDE, &["--seed", "42"]);
    let b = run("convexity", LATITUDE);
    let (ra, rb) = (a.json("convexity.json"), b.json("convexity.json"));
    assert_eq!(ra["seed"], 42);
    assert_eq!(rb["seed"], 0);
    assert_ne!(ra["config_hash"], rb["config_hash"]);
    let with_out = LATITUDE.replace("\"samples\": 16", "\"samples\": 16, \"out\": \"elsewhere\"");
    let c = run("convexity", &with_out);
    assert_eq!(c.json("convexity.json")["config_hash"], rb["config_hash"]);
}

#[test]
fn pipeline_on_the_great_circle_stops_at_the_engel_check() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/pipeline_great_circle.json");
    let r = run("pipeline", &std::fs::read_to_string(path).unwrap());
    assert_ne!(r.code, Some(0));
    let rep = r.json("pipeline.json");
    assert_eq!(rep["passed"], false);
    assert_eq!(rep["result"]["stopped_at"], "prolong-check");
}

#[test]
fn missing_arguments_are_usage_errors() {
    let out = exe().arg("convexity").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = exe().args(["frobnicate", "--config", "x.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
