//! Acceptance suite. Each test prints one `criterion N ...: PASS|FAIL` line
//! with the measured values and then asserts the criterion.
//!
//! Criteria 1, 3, 4 and 5 share one sweep: 50 seeded random instances
//! (n in 3..=6) with 100 random points each.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use poisson_kit::darboux::DarbouxChart;
use poisson_kit::dynamics::{self, invariant_drift_report};
use poisson_kit::exprlang::{Context, Expr};
use poisson_kit::family::{FamilySpec, StateVector};
use poisson_kit::fixtures::{random_family, random_point};
use poisson_kit::poisson::{self, ForeignField, JacobiEvaluation};
use poisson_kit::presets::{self, PresetId};
use poisson_kit_cli::FamilyConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: usize = 50;
const POINTS: usize = 100;
const SWEEP_SEED: u64 = 20_070_201;

struct Instance {
    spec: FamilySpec,
    points: Vec<Vec<f64>>,
}

fn sweep() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(SWEEP_SEED);
    (0..INSTANCES)
        .map(|_| {
            let spec = random_family(&mut rng);
            let points = (0..POINTS).map(|_| random_point(&mut rng, &spec)).collect();
            Instance { spec, points }
        })
        .collect()
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn report(n: usize, title: &str, ok: bool, details: &str) {
    println!("criterion {n} ({title}): {} {details}", verdict(ok));
}

#[test]
fn criterion_1_jacobi_certification() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut dims = [0usize; 7];
    for inst in sweep() {
        dims[inst.spec.n()] += 1;
        for x in &inst.points {
            worst = worst.max(JacobiEvaluation::at(&inst.spec, x).unwrap().max_normalized());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst <= 1e-8 && secs <= 30.0 && dims[3..=6].iter().all(|&c| c > 0);
    report(
        1,
        "jacobi certification",
        ok,
        &format!(
            "max normalized residual {worst:.3e} (bound 1e-8), dims n=3..6 counts {:?}, {secs:.2} s (bound 30 s)",
            &dims[3..=6]
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_2_negative_control() {
    let e = |s: &str| Expr::parse(s, Context::Multivariate(3)).unwrap();
    let field = ForeignField::new(3, vec![(0, 1, e("x2")), (0, 2, e("x3")), (1, 2, e("x1"))]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let r = poisson::jacobi_residual(&field, 0, 1, 2, &x).unwrap();
        worst = worst.max((r.value - 2.0 * x[0]).abs());
    }
    let ok = worst <= 1e-9;
    report(
        2,
        "negative control",
        ok,
        &format!("max |residual(1,2,3) - 2 x1| = {worst:.3e} over 20 points (bound 1e-9)"),
    );
    assert!(ok);
}

#[test]
fn criterion_3_rank_two() {
    let mut max_s3 = 0.0f64;
    let mut min_s2 = f64::INFINITY;
    for inst in sweep() {
        for x in &inst.points {
            let sv = poisson::singular_values(&poisson::eval_j(&inst.spec, x).unwrap().matrix);
            min_s2 = min_s2.min(sv[1] / sv[0]);
            max_s3 = max_s3.max(sv[2] / sv[0]);
        }
    }
    let ok = max_s3 <= 1e-10 && min_s2 >= 1e-8;
    report(
        3,
        "rank-2 certificate",
        ok,
        &format!("max sigma3/sigma1 {max_s3:.3e} (bound 1e-10), min sigma2/sigma1 {min_s2:.3e} (floor 1e-8)"),
    );
    assert!(ok);
}

fn fd_gradient(spec: &FamilySpec, k: usize, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|m| {
            let h = 1e-6 * (1.0 + x[m].abs());
            let mut p = x.to_vec();
            p[m] = x[m] + h;
            let plus = poisson::casimir(spec, k, &p).unwrap();
            p[m] = x[m] - h;
            let minus = poisson::casimir(spec, k, &p).unwrap();
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

#[test]
fn criterion_4_kernel_property() {
    let mut worst_kernel = 0.0f64;
    let mut worst_fd = 0.0f64;
    for inst in sweep() {
        for x in &inst.points {
            for k in inst.spec.casimir_indices() {
                let r = poisson::kernel_residual(&inst.spec, k, x).unwrap();
                worst_kernel = worst_kernel.max(r.normalized());
                let g = poisson::casimir_gradient(&inst.spec, k, x).unwrap();
                let fd = fd_gradient(&inst.spec, k, x);
                let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let diff = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                worst_fd = worst_fd.max(diff / norm);
            }
        }
    }
    let ok = worst_kernel <= 1e-9 && worst_fd <= 1e-6;
    report(
        4,
        "kernel property",
        ok,
        &format!(
            "max |J grad C_k|/scale {worst_kernel:.3e} (bound 1e-9), closed form vs finite differences {worst_fd:.3e} relative (bound 1e-6)"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_5_darboux_certificate() {
    let mut worst_block = 0.0f64;
    let mut worst_round_trip = 0.0f64;
    for inst in sweep() {
        let chart = DarbouxChart::new(&inst.spec).unwrap();
        let block = chart.canonical_block();
        let (i, j) = chart.pivot();
        for x in &inst.points {
            let p = chart.pushforward_matrix(x).unwrap();
            let entry = poisson::eval_j(&inst.spec, x).unwrap().get(i, j);
            worst_block = worst_block.max((p / entry - &block).amax());
            let back = chart.inverse(&chart.forward(x).unwrap()).unwrap();
            let gap = back.iter().zip(x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst_round_trip = worst_round_trip.max(gap);
        }
    }
    let ok = worst_block <= 1e-8 && worst_round_trip <= 1e-9;
    report(
        5,
        "darboux canonical certificate",
        ok,
        &format!(
            "max |D J D^T / J_ij - (B + 0)| {worst_block:.3e} (bound 1e-8), chart round trip {worst_round_trip:.3e} (bound 1e-9)"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_integrability_round_trip() {
    let start = Instant::now();
    let spec = presets::euler_top_default();
    let x0 = StateVector::new(&spec, vec![0.9, 1.1, 1.3]).unwrap();
    let (t_end, step) = (1.0, 1e-3);

    let direct = dynamics::integrate_direct(&spec, &x0, t_end, step).unwrap();
    let chart = DarbouxChart::new(&spec).unwrap();
    let reduced = dynamics::integrate_reduced(&chart, &x0, t_end, step).unwrap();
    let cmp = dynamics::compare_trajectories(&spec, &direct, &reduced).unwrap();
    let drift = invariant_drift_report(&direct, 1e-8);

    // step-doubling ratio of the H error on the longest horizon both step
    // sizes keep inside the domain
    let coarse = dynamics::integrate_direct(&spec, &x0, t_end, 2.0 * step).unwrap();
    let horizon = (direct.last().t.min(coarse.last().t) / (2.0 * step)).floor() * 2.0 * step;
    let h_err = |h: f64| {
        let rec = dynamics::integrate_direct(&spec, &x0, horizon, h).unwrap();
        invariant_drift_report(&rec, 1.0).h_drift
    };
    let factor = h_err(2.0 * step) / h_err(step);
    let secs = start.elapsed().as_secs_f64();

    let covered = !direct.left_domain && (direct.last().t - t_end).abs() < 1e-12;
    let checks = [
        (covered, format!("direct run covers [0, 1] inside the box: reached t = {:.4}", direct.last().t)),
        (cmp.sup_norm <= 1e-5, format!("direct vs reduced sup-norm {:.3e} on [0, {:.4}] (bound 1e-5)", cmp.sup_norm, cmp.t_common)),
        (drift.h_drift <= 1e-8, format!("H drift {:.3e} (bound 1e-8)", drift.h_drift)),
        (drift.casimir_drift[0] <= 1e-8, format!("C3 drift {:.3e} (bound 1e-8)", drift.casimir_drift[0])),
        ((8.0..=32.0).contains(&factor), format!("step-doubling factor {factor:.2} on [0, {horizon:.3}] (range 8..32)")),
        (secs <= 5.0, format!("runtime {secs:.2} s (bound 5 s)")),
    ];
    let ok = checks.iter().all(|(c, _)| *c);
    let details: Vec<String> = checks
        .iter()
        .map(|(c, d)| format!("[{}] {d}", if *c { "ok" } else { "fail" }))
        .collect();
    report(6, "integrability round trip", ok, &details.join("; "));
    assert!(ok, "criterion 6 failed: {}", details.join("; "));
}

#[test]
fn criterion_7_spot_checks() {
    let ex1 = presets::build_example1(3, None, None).unwrap();
    let c3_ex1 = poisson::casimir(&ex1, 2, &[1.0, 2.0, 4.0]).unwrap();
    let top = presets::build_euler_top(&[1.0, 2.0, 3.0], None, None).unwrap();
    let c3_top = poisson::casimir(&top, 2, &[1.0, 1.0, 2.0]).unwrap();
    let halphen = presets::build_halphen().unwrap();
    let j12 = poisson::eval_j(&halphen, &[1.0, 2.0, 4.0]).unwrap().get(0, 1);

    let e1 = (c3_ex1 - 2.0).abs();
    let e2 = (c3_top + 5.0 / 3.0).abs();
    let e3 = (j12 + 1.0 / 12.0).abs();
    let ok = e1 <= 1e-15 && e2 <= 1e-12 && e3 <= 1e-15;
    report(
        7,
        "closed-form spot checks",
        ok,
        &format!(
            "example-1 C3(1,2,4) = {c3_ex1} (err {e1:.1e}), euler-top C3(1,1,2) = {c3_top} (err {e2:.1e}, bound 1e-12), halphen J12(1,2,4) = {j12} (err {e3:.1e}, bound 1e-15)"
        ),
    );
    assert!(ok);
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_poisson-kit"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const LINEAR: &str = r#"{
  "n": 3,
  "psi": ["x", "x", "x"],
  "eta": "1",
  "kappa": {"lambda": [0, 0, 0]},
  "domain": {"lower": [1, 3, 5], "upper": [2, 4, 6]}
}"#;

#[derive(Default)]
struct Tally {
    checked: usize,
    failures: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, failure: String) {
        self.checked += 1;
        if !ok {
            self.failures.push(failure);
        }
    }

    fn expect(&mut self, what: String, got: i32, want: i32) {
        self.check(got == want, format!("{what}: exit {got}, expected {want}"));
    }
}

#[test]
fn criterion_8_cli_golden() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut tally = Tally::default();

    for p in PresetId::ALL {
        let path = d.join(format!("{}.json", p.name()));
        let path_s = path.to_string_lossy().into_owned();
        let (code, _, _) = cli(&["preset", p.name(), "--out", &path_s]);
        tally.expect(format!("preset {}", p.name()), code, 0);
        let (code, _, _) = cli(&["validate", &path_s]);
        tally.expect(format!("validate {}", p.name()), code, 0);
        let (code, _, _) = cli(&["reduce", &path_s]);
        tally.expect(format!("reduce {}", p.name()), code, 0);

        // emit -> load -> emit
        let bytes = std::fs::read_to_string(&path).unwrap();
        let cfg = FamilyConfig::load(&path).unwrap();
        let rebuilt = FamilyConfig::from_spec(&cfg.to_spec().unwrap()).to_json();
        tally.check(
            cfg.to_json() == bytes && rebuilt == bytes,
            format!("round trip of {} is not byte-identical", p.name()),
        );
    }

    let zero_sum = write(
        d,
        "zero_sum.json",
        &LINEAR.replace(
            r#"{"lambda": [0, 0, 0]}"#,
            r#"{"matrix": [[0, 1, 0], [-1, 0, 1], [0, -1, 0]]}"#,
        ),
    );
    let overlap = write(d, "overlap.json", &LINEAR.replace("[1, 3, 5]", "[1, 1.5, 5]"));
    let unknown_field = write(d, "unknown.json", &LINEAR.replace("\"n\": 3", "\"n\": 3, \"sigma\": 1"));
    let bad_expr = write(d, "bad_expr.json", &LINEAR.replace("\"eta\": \"1\"", "\"eta\": \"2(x1-x2)\""));
    let linear = write(d, "linear.json", LINEAR);
    let top = d.join("euler-top.json").to_string_lossy().into_owned();
    let missing = d.join("absent.json").to_string_lossy().into_owned();
    let csv = d.join("t.csv").to_string_lossy().into_owned();

    let error_paths: Vec<(&str, Vec<&str>)> = vec![
        ("kappa matrix violating zero-sum", vec!["validate", &zero_sum]),
        ("chi_12 sign change", vec!["validate", &overlap]),
        ("reduce on unvalidated config", vec!["reduce", &overlap]),
        ("unknown config field", vec!["validate", &unknown_field]),
        ("unparsable expression", vec!["validate", &bad_expr]),
        ("missing config file", vec!["validate", &missing]),
        ("missing hamiltonian", vec!["integrate", &linear, "--x0", "1.5,3.5,5.5", "--t-end", "1", "--step", "0.01"]),
        ("x0 outside box", vec!["integrate", &top, "--x0", "0.1,1.1,1.3", "--t-end", "1", "--step", "0.01"]),
        ("x0 wrong length", vec!["integrate", &top, "--x0", "0.9,1.1", "--t-end", "1", "--step", "0.01"]),
        ("nonpositive step", vec!["integrate", &top, "--x0", "0.9,1.1,1.3", "--t-end", "1", "--step", "0"]),
        ("mode both without --out", vec!["integrate", &top, "--x0", "0.9,1.1,1.3", "--t-end", "0.01", "--step", "0.001", "--mode", "both"]),
        ("unknown preset", vec!["preset", "halfen"]),
        ("unknown flag", vec!["validate", &linear, "--frobnicate"]),
        ("bad thread count", vec!["rank", &linear]),
    ];
    for (what, args) in &error_paths {
        let (code, _, _) = if *what == "bad thread count" {
            let out = Command::new(env!("CARGO_BIN_EXE_poisson-kit"))
                .args(args)
                .env("POISSON_KIT_THREADS", "many")
                .output()
                .unwrap();
            (out.status.code().unwrap_or(-1), String::new(), String::new())
        } else {
            cli(args)
        };
        tally.expect(what.to_string(), code, 2);
    }
    let (code, _, _) = cli(&["integrate", &top, "--x0", "0.9,1.1,1.3", "--t-end", "0.05", "--step", "0.001", "--mode", "both", "--out", &csv]);
    tally.expect("integrate euler-top both".into(), code, 0);

    let Tally { checked, failures } = tally;
    let ok = failures.is_empty();
    report(
        8,
        "cli golden tests",
        ok,
        &format!(
            "{checked} checks: presets validate/reduce with exit 0, {} error paths exit 2, config round trips byte-identical{}",
            error_paths.len(),
            if ok { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    );
    assert!(ok, "{failures:?}");
}
