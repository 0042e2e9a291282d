use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degregorio")).args(args).output().expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn exact_matches_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = run(&["exact", "--alpha", "0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["y", "W", "HW"]);
    assert_eq!(rows.len(), 4096);
    let (s, c) = (std::f64::consts::FRAC_PI_4.sin(), std::f64::consts::FRAC_PI_4.cos());
    for row in rows.iter().step_by(37) {
        let y = row[0];
        let d = y * y + 2.0 * c * y + 1.0;
        assert!((row[1] + 2.0 * s * y / d).abs() <= 1e-15 * (1.0 + row[1].abs()));
        assert!((row[2] - 2.0 * (c * y + 1.0) / d).abs() <= 1e-15 * row[2].abs());
    }
    let m = manifest(dir.path());
    assert_eq!(m["command"], "exact");
    assert_eq!(m["flags"]["alpha"], "0.5");
    assert_eq!(m["grid"]["n"], 4096);
}

#[test]
fn solve_reports_converged_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve.json");
    let o = run(&["solve", "--alpha", "0.5", "--a", "0.02", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report["residual_l2"].as_f64().unwrap() <= 1e-8);
    let lambda = report["lambda"].as_f64().unwrap();
    assert!(lambda.is_finite() && lambda != 0.0);
    let (header, rows) = read_csv(Path::new(report["profile_csv"].as_str().unwrap()));
    assert_eq!(header, ["y", "W"]);
    assert_eq!(rows.len(), 4096);
}

#[test]
fn solve_to_stdout_without_out() {
    let o = run(&["solve", "--alpha", "0.5", "--a", "0.0", "--grid-n", "1024"]);
    assert_eq!(o.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["lambda"].as_f64(), Some(0.0));
    assert!(report["profile_csv"].is_null());
}

#[test]
fn verify_kernel_emits_all_verdicts() {
    let o = run(&["verify", "--suite", "kernel", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,t,k1,k2,k3,k4,ordered"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10_000);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
}

#[test]
fn verify_writes_table_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--suite", "hardy", "--seed", "3", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let text = std::fs::read_to_string(dir.path().join("hardy.csv")).unwrap();
    assert!(text.starts_with("function_id,k,p,gamma,ratio\n"));
    assert_eq!(text.lines().count(), 151);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("hardy_report.json")).unwrap()).unwrap();
    assert_eq!(report["suite"], "hardy");
    assert_eq!(manifest(dir.path())["seed"], 3);
}

#[test]
fn usage_errors_exit_two() {
    let o = run(&["solve", "--alpha", "0.5", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["solve"]).status.code(), Some(2));
    assert_eq!(run(&["exact", "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--suite", "nope"]).status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# defaults\nalpha=0.3\ngrid-n=256\n").unwrap();
    let out = dir.path().join("p.csv");
    let o = run(&["exact", "--config", cfg.to_str().unwrap(), "--alpha", "0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = read_csv(&out);
    assert_eq!(rows.len(), 256);
    let m = manifest(dir.path());
    assert_eq!(m["flags"]["alpha"], "0.5");
    assert_eq!(m["flags"]["grid-n"], "256");

    std::fs::write(&cfg, "alpha=0.5\nwidth=3\n").unwrap();
    let o = run(&["exact", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_identical_except_timestamp() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for d in &dirs {
        let out = d.path().join("c.csv");
        let o = run(&["continue", "--alpha", "0.5", "--a-max", "0.02", "--steps", "2", "--grid-n", "2048", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let mut m = manifest(d.path());
        m["timestamp"] = Value::Null;
        m["flags"]["out"] = Value::Null;
        outputs.push((std::fs::read(&out).unwrap(), m));
    }
    assert_eq!(outputs[0], outputs[1]);
    let (header, rows) = read_csv(&dirs[0].path().join("c.csv"));
    assert_eq!(header, ["a", "lambda", "residual", "iterations"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], 0.0);
    assert!(rows[2][1] < rows[1][1] && rows[1][1] < 0.0);
}

#[test]
fn evolve_writes_snapshots_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "evolve", "--alpha", "1", "--a", "0", "--t-end", "0.3", "--snapshots", "0.1,0.2", "--grid-n", "1024",
        "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let sups = summary["sup_norm"].as_array().unwrap();
    let times: Vec<f64> = sups.iter().map(|e| e["t"].as_f64().unwrap()).collect();
    assert_eq!(times, [0.0, 0.1, 0.2, 0.3]);
    for e in sups {
        let (t, s) = (e["t"].as_f64().unwrap(), e["sup_norm"].as_f64().unwrap());
        assert!((s * (1.0 - t) - 1.0).abs() < 1e-3, "{t} {s}");
    }
    // four snapshots are too few for a blow-up fit
    assert!(summary["T_star"].is_null());
    assert!(summary["blowup_note"].is_string());
    let (header, rows) = read_csv(&dir.path().join("snapshot_003.csv"));
    assert_eq!(header, ["x", "w"]);
    assert_eq!(rows.len(), 1024);
    assert_eq!(manifest(dir.path())["command"], "evolve");
}
