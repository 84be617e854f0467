//! End-to-end CLI tests: the estimate → plan → simulate → compare pipeline,
//! exit codes and byte-for-byte reproducibility.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bidflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bidflow"))
}

fn write_contracts(dir: &Path) {
    fs::write(
        dir.join("contracts.json"),
        r#"[
  {"id": "a", "deadline_hours": 20.0, "requirement": 500, "targeting": ["x"]},
  {"id": "b", "deadline_hours": 40.0, "requirement": 800, "targeting": ["x", "y"]}
]"#,
    )
    .unwrap();
}

fn write_config(dir: &Path, windows: usize, repeats: usize, seed: u64) {
    let cfg = format!(
        r#"{{
  "schema_version": 1,
  "contracts": "contracts.json",
  "curves": {{"synthetic": {{
    "tags": {{
      "x": {{"lambda_base": 80.0, "lambda_phase": 0.0, "scale_base": 40.0, "scale_amplitude": 0.4, "scale_phase": 6.0}},
      "y": {{"lambda_base": 60.0, "lambda_phase": 5.0, "scale_base": 30.0, "scale_amplitude": 0.4, "scale_phase": 11.0}}
    }},
    "sigma": 3.0, "lambda_amplitude": 0.5, "grid_points": 384
  }}}},
  "sigma": 3.0,
  "replan_hours": 1.0,
  "windows": {{"count": {windows}, "stride_hours": 12.0, "length_hours": 48.0, "repeats": {repeats}}},
  "seed": {seed},
  "out_dir": "results"
}}"#
    );
    fs::write(dir.join("config.json"), cfg).unwrap();
}

fn write_log(dir: &Path) {
    let mut rows = vec!["timestamp,user_tag,market_price".to_string()];
    // Deterministic pseudo-random log: LCG arrivals, two tags.
    let mut state: u64 = 12345;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for (tag, rate, theta) in [("x", 200.0f64, 40.0f64), ("y", 150.0, 30.0)] {
        let mut t = 0.0f64;
        while t < 96.0 {
            t += -(1.0 - next()).ln() / rate;
            let price = -theta * (1.0 - next()).ln();
            rows.push(format!("{:.3},{tag},{price:.2}", t * 3600.0));
        }
    }
    fs::write(dir.join("log.csv"), rows.join("\n")).unwrap();
}

#[test]
fn estimate_writes_one_curve_per_tag() {
    let dir = tempfile::tempdir().unwrap();
    write_log(dir.path());
    let out = bidflow()
        .args(["estimate", "--log"])
        .arg(dir.path().join("log.csv"))
        .arg("--out")
        .arg(dir.path().join("curves"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("curves/curve_x.json").exists());
    assert!(dir.path().join("curves/curve_y.json").exists());
    assert!(dir.path().join("curves/estimation_report.json").exists());
}

#[test]
fn estimate_rejects_empty_and_mostly_malformed_logs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "timestamp,user_tag,market_price\n").unwrap();
    let out = bidflow()
        .args(["estimate", "--log"])
        .arg(dir.path().join("empty.csv"))
        .arg("--out")
        .arg(dir.path().join("curves"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // One malformed row in many is tolerated with a warning.
    write_log(dir.path());
    let mut content = fs::read_to_string(dir.path().join("log.csv")).unwrap();
    content.push_str("\nnot_a_time,x,5.0\n");
    fs::write(dir.path().join("log.csv"), content).unwrap();
    let out = bidflow()
        .args(["estimate", "--log"])
        .arg(dir.path().join("log.csv"))
        .arg("--out")
        .arg(dir.path().join("curves2"))
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn plan_writes_document_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    write_contracts(dir.path());
    write_config(dir.path(), 1, 1, 7);
    let out = bidflow()
        .current_dir(dir.path())
        .args(["plan", "--config", "config.json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("duality gap"));
    assert!(stdout.contains("adequate supply: pass"));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("results/plan.json")).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["breakpoints_hours"].as_array().unwrap().len(), 2);
    assert!(doc["converged"].as_bool().unwrap());
    // Static variant also solves.
    let out = bidflow()
        .current_dir(dir.path())
        .args(["plan", "--config", "config.json", "--static"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("results/plan_static.json").exists());
}

#[test]
fn strict_infeasible_plan_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("contracts.json"),
        // Requirement far beyond anything the market supplies.
        r#"[{"id": "a", "deadline_hours": 20.0, "requirement": 10000000, "targeting": ["x"]}]"#,
    )
    .unwrap();
    write_config(dir.path(), 1, 1, 7);
    let out = bidflow()
        .current_dir(dir.path())
        .args(["plan", "--config", "config.json", "--strict"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // Without --strict the best-effort fallback produces a plan.
    let out = bidflow()
        .current_dir(dir.path())
        .args(["plan", "--config", "config.json"])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn simulate_outputs_are_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    write_contracts(dir.path());
    write_config(dir.path(), 2, 1, 99);
    let run = |out_dir: &str| {
        let out = bidflow()
            .current_dir(dir.path())
            .args(["simulate", "--config", "config.json", "--both", "--out", out_dir])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run("r1");
    run("r2");
    for rel in [
        "campaign_dynamic.json",
        "campaign_static.json",
        "compare.json",
        "dynamic_w00_r0/events.csv",
        "dynamic_w00_r0/trace.csv",
        "static_w01_r0/events.csv",
        "cpaths_dynamic.csv",
    ] {
        let a = fs::read(dir.path().join("r1").join(rel)).unwrap();
        let b = fs::read(dir.path().join("r2").join(rel)).unwrap();
        assert_eq!(a, b, "{rel} differs between identical runs");
    }
    // Events CSV carries the expected header.
    let events = fs::read_to_string(dir.path().join("r1/dynamic_w00_r0/events.csv")).unwrap();
    assert!(events.starts_with("t,type,price,bid,won,allocated_contract"));
}

#[test]
fn simulate_fixed_plan_open_loop() {
    let dir = tempfile::tempdir().unwrap();
    write_contracts(dir.path());
    write_config(dir.path(), 1, 1, 13);
    let out = bidflow()
        .current_dir(dir.path())
        .args(["plan", "--config", "config.json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = bidflow()
        .current_dir(dir.path())
        .args(["simulate", "--config", "config.json", "--plan", "results/plan.json", "--out", "fixed"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("fixed/campaign_plan.json").exists());
    assert!(dir.path().join("fixed/plan_w00_r0/events.csv").exists());
}

#[test]
fn compare_identical_directories_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    write_contracts(dir.path());
    write_config(dir.path(), 1, 2, 5);
    let out = bidflow()
        .current_dir(dir.path())
        .args(["simulate", "--config", "config.json", "--out", "res"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bidflow().current_dir(dir.path()).args(["compare", "res", "res"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("+0.00% mean saving"), "{stdout}");

    // Missing directory is an input error.
    let out = bidflow().current_dir(dir.path()).args(["compare", "res", "missing"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}
