use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_poisson-kit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"))
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn preset_output_matches_golden_files() {
    for name in ["example1", "halphen", "circle-maps", "euler-top"] {
        let out = run(&["preset", name]);
        assert_eq!(out.status.code(), Some(0));
        let expected = std::fs::read_to_string(golden(name)).unwrap();
        assert_eq!(String::from_utf8(out.stdout).unwrap(), expected, "{name}");
    }
}

#[test]
fn validate_report_fields() {
    let out = run(&["validate", golden("halphen").to_str().unwrap(), "--samples", "2000", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["passed"], true);
    assert!(r["jacobi_max"].as_f64().unwrap() <= 1e-8);
    assert!(r["kernel_max"].as_f64().unwrap() <= 1e-9);
    assert_eq!(r["rank"]["failures"], 0);
    assert_eq!(r["validation"]["samples"], 2000);
    assert_eq!(r["validation"]["seed"], 7);
    let names: Vec<&str> = r["validation"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["psi_prime[1]", "psi_prime[2]", "psi_prime[3]", "eta", "chi[1,2]"]);
}

#[test]
fn validate_is_deterministic_under_threads() {
    let path = golden("euler-top");
    let args = ["validate", path.to_str().unwrap(), "--samples", "3000", "--seed", "3"];
    let one = bin().args(args).env("POISSON_KIT_THREADS", "1").output().unwrap();
    let four = bin().args(args).env("POISSON_KIT_THREADS", "4").output().unwrap();
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn validation_failure_names_function_and_witness() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(golden("example1"))
        .unwrap()
        .replace("3.0000000000000000e0", "1.5000000000000000e0");
    let path = dir.path().join("overlap.json");
    std::fs::write(&path, text).unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let r = json(&out);
    assert_eq!(r["passed"], false);
    assert_eq!(r["failure"]["function"], "chi[1,2]");
    assert_eq!(r["failure"]["witness"].as_array().unwrap().len(), 3);
}

#[test]
fn zero_sum_error_names_triple() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.json");
    std::fs::write(
        &path,
        r#"{"n": 3, "psi": ["x", "x", "x"], "eta": "1",
            "kappa": {"matrix": [[0, 1, 0], [-1, 0, 1], [0, -1, 0]]},
            "domain": {"lower": [1, 3, 5], "upper": [2, 4, 6]}}"#,
    )
    .unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(1,2,3)"), "{err}");
}

#[test]
fn reduce_report_fields() {
    let out = run(&["reduce", golden("euler-top").to_str().unwrap(), "--samples", "500"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["pivot"], serde_json::json!([1, 2]));
    assert_eq!(r["pivot_sign"].as_f64(), Some(1.0));
    assert_eq!(r["casimir_coordinates"], 1);
    assert!(r["max_deviation"].as_f64().unwrap() <= 1e-8);
    assert!(r["max_round_trip"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn reduce_two_dimensional_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("n2.json");
    std::fs::write(
        &path,
        r#"{"n": 2, "psi": ["x", "exp(x)"], "eta": "1 + x1^2",
            "kappa": {"lambda": [0, 5]},
            "domain": {"lower": [0, 0], "upper": [1, 1]}}"#,
    )
    .unwrap();
    let out = run(&["reduce", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["degenerate"], true);
    assert_eq!(r["casimir_coordinates"], 0);
}

#[test]
fn integrate_writes_csv_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("traj.csv");
    let out = run(&[
        "integrate",
        golden("euler-top").to_str().unwrap(),
        "--x0",
        "0.9,1.1,1.3",
        "--t-end",
        "0.05",
        "--step",
        "0.001",
        "--mode",
        "both",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert!(r["comparison"]["sup_norm"].as_f64().unwrap() <= 1e-5);
    for tag in ["direct", "reduced"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("traj.{tag}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,tau,x1,x2,x3,H,C3"));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert!(rows.len() > 40);
        assert!(rows.iter().all(|r| r.len() == 7));
        assert!((rows.last().unwrap()[0] - 0.05).abs() < 1e-9);
    }
}

#[test]
fn integrate_direct_to_stdout() {
    let out = run(&[
        "integrate",
        golden("euler-top").to_str().unwrap(),
        "--x0",
        "0.9,1.1,1.3",
        "--t-end",
        "0.01",
        "--step",
        "0.001",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 12);
    let summary: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(summary["runs"][0]["left_domain"], false);
}

#[test]
fn truncated_run_exits_one() {
    let out = run(&[
        "integrate",
        golden("euler-top").to_str().unwrap(),
        "--x0",
        "0.9,1.1,1.3",
        "--t-end",
        "1",
        "--step",
        "0.001",
        "--mode",
        "reduced",
        "--out",
        tempfile::tempdir().unwrap().path().join("r.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let r = json(&out);
    assert_eq!(r["runs"][0]["left_domain"], true);
}

#[test]
fn rank_and_casimirs() {
    let path = golden("example1");
    let out = run(&["rank", path.to_str().unwrap(), "--at", "1.5,3.5,5.5"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["rank"], 2);
    assert_eq!(r["singular_values"].as_array().unwrap().len(), 3);

    let out = run(&["casimirs", path.to_str().unwrap(), "--at", "1,2,4"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["in_domain"], false);
    assert_eq!(r["casimirs"][0]["k"], 3);
    assert_eq!(r["casimirs"][0]["value"].as_f64(), Some(2.0));
    assert_eq!(
        r["casimirs"][0]["closed_form"],
        "[(x2) - (x3)] / [(x1) - (x2)]"
    );
}

#[test]
fn phi_configs_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("phi.json");
    std::fs::write(
        &path,
        r#"{"n": 3, "phi": ["x", "1", "1/(1 + x^2)"], "eta": "2",
            "kappa": {"lambda": [0, 3, 0]},
            "domain": {"lower": [1, 0, -1], "upper": [2, 1, 1]},
            "pivot": [1, 2]}"#,
    )
    .unwrap();
    let out = run(&["validate", path.to_str().unwrap(), "--samples", "500"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["reduce", path.to_str().unwrap(), "--samples", "200"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_writes_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = run(&[
        "validate",
        golden("circle-maps").to_str().unwrap(),
        "--samples",
        "500",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    // only the report itself is left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}
