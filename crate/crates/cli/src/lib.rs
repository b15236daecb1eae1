//! Command implementations behind the `poisson-kit` binary.
//!
//! Every command returns an [`Output`]: the text for stdout, an optional
//! diagnostic for stderr and the process exit code (0 pass, 1 numeric
//! failure, 2 user or config error).

pub mod canonical;
pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use poisson_kit::darboux::{CanonicalReport, DarbouxChart, DarbouxError};
use poisson_kit::dynamics::{
    self, DynamicsError, IntegrationMode, TrajectoryRecord,
};
use poisson_kit::family::{self, FamilyError, FamilySpec, StateVector, ValidationReport};
use poisson_kit::poisson::{self, JacobiEvaluation};
use poisson_kit::presets::PresetId;
use poisson_kit::sampling;
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::FamilyConfig;

pub const THREADS_ENV: &str = "POISSON_KIT_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub stdout: String,
    pub stderr: Option<String>,
    pub code: i32,
}

impl Output {
    fn report(value: &Value, code: i32) -> Self {
        Output {
            stdout: canonical::to_string(value),
            stderr: None,
            code,
        }
    }

    fn with_stderr(mut self, msg: impl Into<String>) -> Self {
        self.stderr = Some(msg.into());
        self
    }
}

/// Sizes the global rayon pool from `POISSON_KIT_THREADS` (0 or unset
/// means one thread per core).
pub fn configure_threads(value: Option<&str>) -> Result<(), CliError> {
    let Some(raw) = value else { return Ok(()) };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{raw}`")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Numeric(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let fail = |e: &dyn std::fmt::Display| CliError::Usage(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(contents).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, output: Output) -> Result<Output, CliError> {
    match out {
        Some(path) => {
            write_atomic(path, output.stdout.as_bytes())?;
            Ok(Output {
                stdout: String::new(),
                ..output
            })
        }
        None => Ok(output),
    }
}

fn load(path: &Path) -> Result<FamilySpec, CliError> {
    FamilyConfig::load(path)?.to_spec()
}

fn validation_json(r: &ValidationReport) -> Value {
    let checks: Vec<Value> = r
        .checks
        .iter()
        .map(|c| {
            let mut v = json!({
                "name": c.name,
                "sign": c.sign.to_string(),
                "min": c.min,
                "max": c.max,
                "min_abs": c.min_abs,
            });
            if let Some((reason, witness)) = &c.failure {
                v["failure"] = json!({"reason": reason, "witness": witness});
            }
            v
        })
        .collect();
    json!({
        "samples": r.samples,
        "seed": r.seed,
        "method": r.method,
        "checks": checks,
    })
}

/// Runs the nonvanishing checks; a failed hypothesis is a config error.
fn certify_hypotheses(spec: &FamilySpec, samples: usize, seed: u64) -> Result<Result<ValidationReport, Output>, CliError> {
    match family::validate_family(spec, samples, seed) {
        Ok(r) => Ok(Ok(r)),
        Err(FamilyError::Validation {
            function,
            reason,
            witness,
            report,
        }) => {
            let msg = format!("validation failed: {function} {reason} at {witness:?}");
            let value = json!({
                "command": "validate",
                "passed": false,
                "validation": validation_json(&report),
                "failure": {"function": function, "reason": reason, "witness": witness},
            });
            Ok(Err(Output::report(&value, 2).with_stderr(msg)))
        }
        Err(e) => Err(CliError::Usage(e.to_string())),
    }
}

struct PointStats {
    jacobi: f64,
    sigma2: f64,
    sigma3: f64,
    rank: usize,
    kernel: f64,
}

fn point_stats(spec: &FamilySpec, x: &[f64]) -> Result<PointStats, poisson::PoissonError> {
    let jacobi = JacobiEvaluation::at(spec, x)?.max_normalized();
    let sv = poisson::singular_values(&poisson::eval_j(spec, x)?.matrix);
    let ratio = |k: usize| sv.get(k).map_or(0.0, |s| s / sv[0]);
    let mut kernel = 0.0f64;
    for k in spec.casimir_indices() {
        kernel = kernel.max(poisson::kernel_residual(spec, k, x)?.normalized());
    }
    Ok(PointStats {
        jacobi,
        sigma2: ratio(1),
        sigma3: ratio(2),
        rank: poisson::numerical_rank(&sv),
        kernel,
    })
}

/// `validate`: nonvanishing hypotheses, then Jacobi, rank and kernel
/// certificates on the same sample points.
pub fn cmd_validate(config: &Path, samples: usize, seed: u64, out: Option<&Path>) -> Result<Output, CliError> {
    let spec = load(config)?;
    let report = match certify_hypotheses(&spec, samples, seed)? {
        Ok(r) => r,
        Err(output) => return emit(out, output),
    };
    let domain = spec.domain();
    let points = sampling::box_points(&domain.lower, &domain.upper, samples, seed);
    let stats: Vec<PointStats> = points
        .par_iter()
        .map(|x| point_stats(&spec, x))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Numeric(e.to_string()))?;

    let jacobi_max = stats.iter().map(|s| s.jacobi).fold(0.0, f64::max);
    let kernel_max = stats.iter().map(|s| s.kernel).fold(0.0, f64::max);
    let min_sigma2 = stats.iter().map(|s| s.sigma2).fold(f64::INFINITY, f64::min);
    let max_sigma3 = stats.iter().map(|s| s.sigma3).fold(0.0, f64::max);
    let rank_failures = stats.iter().filter(|s| s.rank != 2).count();
    let rank_ok = rank_failures == 0 && min_sigma2 >= poisson::SIGMA2_FLOOR && max_sigma3 <= poisson::RANK_TOLERANCE;
    let passed = jacobi_max <= poisson::JACOBI_TOLERANCE && rank_ok && kernel_max <= poisson::KERNEL_TOLERANCE;

    let value = json!({
        "command": "validate",
        "n": spec.n(),
        "pivot": [spec.pivot().0 + 1, spec.pivot().1 + 1],
        "validation": validation_json(&report),
        "jacobi_max": jacobi_max,
        "jacobi_mode": poisson::PartialsMode::Symbolic.as_str(),
        "jacobi_tolerance": poisson::JACOBI_TOLERANCE,
        "rank": {
            "expected": 2,
            "failures": rank_failures,
            "min_sigma2_ratio": min_sigma2,
            "max_sigma3_ratio": max_sigma3,
        },
        "kernel_max": kernel_max,
        "kernel_tolerance": poisson::KERNEL_TOLERANCE,
        "passed": passed,
    });
    let output = Output::report(&value, if passed { 0 } else { 1 });
    emit(
        out,
        if passed { output } else { output.with_stderr("structure certificates failed") },
    )
}

fn canonical_json(r: &CanonicalReport, passed: bool) -> Value {
    json!({
        "command": "reduce",
        "samples": r.samples,
        "seed": r.seed,
        "pivot": [r.pivot.0, r.pivot.1],
        "pivot_sign": r.pivot_sign,
        "casimir_coordinates": r.casimir_coordinates,
        "degenerate": r.casimir_coordinates == 0,
        "max_deviation": r.max_deviation,
        "witness": r.witness,
        "max_round_trip": r.max_round_trip,
        "round_trip_witness": r.round_trip_witness,
        "max_pivot_path_gap": r.max_pivot_path_gap,
        "min_abs_det": r.min_abs_det,
        "deviation_tolerance": poisson_kit::darboux::CANONICAL_TOLERANCE,
        "round_trip_tolerance": poisson_kit::darboux::ROUND_TRIP_TOLERANCE,
        "passed": passed,
    })
}

/// `reduce`: certifies that the chart brings `J` to `J_ij (B ⊕ 0)`.
pub fn cmd_reduce(config: &Path, samples: usize, seed: u64, out: Option<&Path>) -> Result<Output, CliError> {
    let spec = load(config)?;
    if let Err(output) = certify_hypotheses(&spec, family::DEFAULT_SAMPLES, seed)? {
        return emit(out, output);
    }
    let chart = DarbouxChart::new(&spec).map_err(|e| CliError::Numeric(e.to_string()))?;
    let output = match chart.canonical_certificate(samples, seed) {
        Ok(r) => Output::report(&canonical_json(&r, true), 0),
        Err(DarbouxError::Certificate { report, .. }) => {
            Output::report(&canonical_json(&report, false), 1).with_stderr("canonical certificate failed")
        }
        Err(e) => return Err(CliError::Numeric(e.to_string())),
    };
    emit(out, output)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Direct,
    Reduced,
    Both,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Direct => "direct",
            Mode::Reduced => "reduced",
            Mode::Both => "both",
        }
    }
}

/// `t,tau,x1..xn,H,C_k...` with one column per non-pivot `k`.
pub fn trajectory_csv(spec: &FamilySpec, rec: &TrajectoryRecord) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "tau".to_string()];
    header.extend((1..=spec.n()).map(|k| format!("x{k}")));
    header.push("H".into());
    header.extend(spec.casimir_indices().iter().map(|k| format!("C{}", k + 1)));
    w.write_record(&header).expect("in-memory write");
    for s in &rec.samples {
        let mut row = vec![s.t, s.tau];
        row.extend(&s.x);
        row.push(s.h);
        row.extend(&s.casimirs);
        w.write_record(row.iter().map(|v| format!("{v:e}"))).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

fn run_summary(rec: &TrajectoryRecord, file: Option<&Path>) -> Value {
    let drift = dynamics::invariant_drift_report(rec, 1e-8);
    let last = rec.last();
    json!({
        "mode": match rec.mode { IntegrationMode::Direct => "direct", IntegrationMode::Reduced => "reduced" },
        "samples": rec.samples.len(),
        "t_final": last.t,
        "tau_final": last.tau,
        "left_domain": rec.left_domain,
        "h_drift": drift.h_drift,
        "casimir_drift": drift.casimir_drift,
        "file": file.map(|p| p.display().to_string()),
    })
}

fn sibling(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}.{tag}.{ext}"))
}

fn dynamics_error(e: DynamicsError) -> CliError {
    match e {
        DynamicsError::MissingHamiltonian | DynamicsError::InvalidStep(_) | DynamicsError::InvalidHorizon(_) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Numeric(other.to_string()),
    }
}

pub struct IntegrateArgs<'a> {
    pub config: &'a Path,
    pub x0: &'a [f64],
    pub t_end: f64,
    pub step: f64,
    pub mode: Mode,
    pub out: Option<&'a Path>,
}

/// `integrate`: writes the trajectory CSV(s) and prints a JSON summary.
/// A run that leaves the domain before `t_end` exits with 1.
pub fn cmd_integrate(args: IntegrateArgs<'_>) -> Result<Output, CliError> {
    let spec = load(args.config)?;
    if spec.hamiltonian().is_none() {
        return Err(CliError::Usage(
            "config has no `hamiltonian`; integration needs one".into(),
        ));
    }
    if args.x0.len() != spec.n() {
        return Err(CliError::Usage(format!(
            "--x0 has {} entries, expected {}",
            args.x0.len(),
            spec.n()
        )));
    }
    let x0 = StateVector::new(&spec, args.x0.to_vec()).map_err(|e| CliError::Usage(e.to_string()))?;
    if args.mode == Mode::Both && args.out.is_none() {
        return Err(CliError::Usage("--mode both needs --out".into()));
    }
    if let Err(output) = certify_hypotheses(&spec, family::DEFAULT_SAMPLES, 0)? {
        return Ok(output);
    }

    let direct = || dynamics::integrate_direct(&spec, &x0, args.t_end, args.step).map_err(dynamics_error);
    let reduced = || -> Result<TrajectoryRecord, CliError> {
        let chart = DarbouxChart::new(&spec).map_err(|e| CliError::Numeric(e.to_string()))?;
        dynamics::integrate_reduced(&chart, &x0, args.t_end, args.step).map_err(dynamics_error)
    };
    let mut stdout = String::new();
    let mut runs = Vec::new();
    let mut comparison = Value::Null;
    match args.mode {
        Mode::Direct | Mode::Reduced => {
            let rec = if args.mode == Mode::Direct { direct()? } else { reduced()? };
            let csv = trajectory_csv(&spec, &rec);
            match args.out {
                Some(path) => write_atomic(path, csv.as_bytes())?,
                None => stdout.push_str(&csv),
            }
            runs.push((rec, args.out.map(Path::to_path_buf)));
        }
        Mode::Both => {
            let out = args.out.expect("checked above");
            let d = direct()?;
            let r = reduced()?;
            let cmp = dynamics::compare_trajectories(&spec, &d, &r).map_err(dynamics_error)?;
            comparison = json!({
                "sup_norm": cmp.sup_norm,
                "t_common": cmp.t_common,
                "compared": cmp.compared,
            });
            for (rec, tag) in [(d, "direct"), (r, "reduced")] {
                let path = sibling(out, tag);
                write_atomic(&path, trajectory_csv(&spec, &rec).as_bytes())?;
                runs.push((rec, Some(path)));
            }
        }
    }

    let truncated = runs.iter().any(|(r, _)| r.left_domain);
    let summary = json!({
        "command": "integrate",
        "mode": args.mode.as_str(),
        "t_end": args.t_end,
        "step": args.step,
        "runs": runs.iter().map(|(r, p)| run_summary(r, p.as_deref())).collect::<Vec<_>>(),
        "comparison": comparison,
    });
    let text = canonical::to_string(&summary);
    let output = if stdout.is_empty() {
        Output::report(&summary, if truncated { 1 } else { 0 })
    } else {
        // CSV owns stdout; the summary goes to stderr
        Output {
            stdout,
            stderr: Some(text),
            code: if truncated { 1 } else { 0 },
        }
    };
    Ok(if truncated && output.stderr.is_none() {
        output.with_stderr("trajectory left the domain before t_end")
    } else {
        output
    })
}

/// `preset`: emits the config of a built-in instance.
pub fn cmd_preset(name: &str, out: Option<&Path>) -> Result<Output, CliError> {
    let id: PresetId = name.parse().map_err(|e: poisson_kit::presets::PresetError| CliError::Usage(e.to_string()))?;
    let cfg = FamilyConfig::from_spec(&id.build());
    emit(
        out,
        Output {
            stdout: cfg.to_json(),
            stderr: None,
            code: 0,
        },
    )
}

/// Closed forms may be evaluated outside the box; reports carry an
/// `in_domain` flag.
fn point_or_center(spec: &FamilySpec, at: Option<&[f64]>) -> Result<Vec<f64>, CliError> {
    let x = match at {
        Some(x) => x.to_vec(),
        None => spec.domain().center(),
    };
    if x.len() != spec.n() {
        return Err(CliError::Usage(format!("--at has {} entries, expected {}", x.len(), spec.n())));
    }
    Ok(x)
}

/// `rank`: singular values of `J` at a point (the box center by default).
pub fn cmd_rank(config: &Path, at: Option<&[f64]>) -> Result<Output, CliError> {
    let spec = load(config)?;
    let x = point_or_center(&spec, at)?;
    let j = poisson::eval_j(&spec, &x).map_err(|e| CliError::Numeric(e.to_string()))?;
    let sv = poisson::singular_values(&j.matrix);
    let rank = poisson::numerical_rank(&sv);
    let ratio = |k: usize| sv.get(k).map_or(0.0, |s| s / sv[0]);
    let passed = rank == 2 && ratio(1) >= poisson::SIGMA2_FLOOR && ratio(2) <= poisson::RANK_TOLERANCE;
    let value = json!({
        "command": "rank",
        "point": x,
        "in_domain": spec.domain().contains(&x),
        "singular_values": sv,
        "rank": rank,
        "expected": 2,
        "sigma2_ratio": ratio(1),
        "sigma3_ratio": ratio(2),
        "passed": passed,
    });
    Ok(Output::report(&value, if passed { 0 } else { 1 }))
}

fn chi_text(spec: &FamilySpec, a: usize, b: usize) -> String {
    let n = spec.n();
    let mut s = format!("({}) - ({})", spec.potential(a).describe(a, n), spec.potential(b).describe(b, n));
    let k = spec.kappa().kappa(a, b);
    if k != 0.0 {
        s.push_str(&format!(" + ({k:e})"));
    }
    s
}

/// `casimirs`: closed forms `C_k = chi_jk / chi_ij` and their values.
pub fn cmd_casimirs(config: &Path, at: Option<&[f64]>) -> Result<Output, CliError> {
    let spec = load(config)?;
    let x = point_or_center(&spec, at)?;
    let (i, j) = spec.pivot();
    let mut list = Vec::new();
    for k in spec.casimir_indices() {
        let value = poisson::casimir(&spec, k, &x).map_err(|e| CliError::Numeric(e.to_string()))?;
        let gradient = poisson::casimir_gradient(&spec, k, &x).map_err(|e| CliError::Numeric(e.to_string()))?;
        list.push(json!({
            "k": k + 1,
            "closed_form": format!("[{}] / [{}]", chi_text(&spec, j, k), chi_text(&spec, i, j)),
            "value": value,
            "gradient": gradient,
        }));
    }
    let value = json!({
        "command": "casimirs",
        "point": x,
        "in_domain": spec.domain().contains(&x),
        "pivot": [i + 1, j + 1],
        "casimirs": list,
    });
    Ok(Output::report(&value, 0))
}
