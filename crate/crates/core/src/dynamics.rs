//! Fixed-step RK4 integration of `dx/dt = J(x) ∇H(x)` and of the reduced
//! one-degree-of-freedom system in Darboux coordinates.
//!
//! The reduced flow runs in the reparametrized time `τ` (`dτ = J_ij dt`):
//!
//! ```text
//! dy_i/dτ =  ∂H̃/∂y_j,   dy_j/dτ = -∂H̃/∂y_i,   dt/dτ = 1 / J_ij,
//! ```
//!
//! with `H̃(y) = H(x(y))` and the Casimir coordinates held fixed.
//! Leaving the domain box (or the chart) ends a run early; the record is
//! then flagged `left_domain`.

use thiserror::Error;

use crate::darboux::{DarbouxChart, DarbouxError};
use crate::exprlang::EvalError;
use crate::family::{FamilySpec, StateVector};
use crate::poisson::{self, PoissonError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("the instance has no hamiltonian")]
    MissingHamiltonian,
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("end time must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Darboux(#[from] DarbouxError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationMode {
    Direct,
    Reduced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub tau: f64,
    pub x: Vec<f64>,
    pub h: f64,
    /// `C_k` for every non-pivot `k`, in index order.
    pub casimirs: Vec<f64>,
    /// Chart coordinates, for reduced runs.
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub mode: IntegrationMode,
    pub samples: Vec<TrajectorySample>,
    pub left_domain: bool,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("records hold at least the initial sample")
    }
}

fn check_args(spec: &FamilySpec, t_end: f64, step: f64) -> Result<(), DynamicsError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(DynamicsError::InvalidStep(step));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(DynamicsError::InvalidHorizon(t_end));
    }
    if spec.hamiltonian().is_none() {
        return Err(DynamicsError::MissingHamiltonian);
    }
    Ok(())
}

fn hamiltonian(spec: &FamilySpec, x: &[f64]) -> Result<f64, EvalError> {
    spec.hamiltonian()
        .expect("checked by caller")
        .expr
        .eval(x)
}

/// `J(x) ∇H(x)`.
pub fn vector_field(spec: &FamilySpec, x: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    let h = spec.hamiltonian().ok_or(DynamicsError::MissingHamiltonian)?;
    let grad = h
        .gradient
        .iter()
        .map(|g| g.eval(x))
        .collect::<Result<Vec<_>, _>>()?;
    let j = poisson::eval_j(spec, x)?;
    let n = spec.n();
    Ok((0..n)
        .map(|r| (0..n).map(|c| j.get(r, c) * grad[c]).sum())
        .collect())
}

fn pivot_entry(spec: &FamilySpec, x: &[f64]) -> Result<f64, DynamicsError> {
    let (i, j) = spec.pivot();
    Ok(poisson::eval_j(spec, x)?.get(i, j))
}

fn sample(
    spec: &FamilySpec,
    t: f64,
    tau: f64,
    x: Vec<f64>,
    y: Option<Vec<f64>>,
) -> Result<TrajectorySample, DynamicsError> {
    Ok(TrajectorySample {
        t,
        tau,
        h: hamiltonian(spec, &x)?,
        casimirs: poisson::casimirs(spec, &x)?,
        x,
        y,
    })
}

fn axpy(base: &[f64], scale: f64, dir: &[f64]) -> Vec<f64> {
    base.iter().zip(dir).map(|(b, d)| b + scale * d).collect()
}

/// One classical RK4 step.
fn rk4_step<F>(f: &F, z: &[f64], h: f64) -> Result<Vec<f64>, DynamicsError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, DynamicsError>,
{
    let k1 = f(z)?;
    let k2 = f(&axpy(z, 0.5 * h, &k1))?;
    let k3 = f(&axpy(z, 0.5 * h, &k2))?;
    let k4 = f(&axpy(z, h, &k3))?;
    Ok((0..z.len())
        .map(|m| z[m] + h / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]))
        .collect())
}

fn direct(
    spec: &FamilySpec,
    x0: &StateVector,
    t_end: f64,
    step: f64,
    direction: f64,
) -> Result<TrajectoryRecord, DynamicsError> {
    check_args(spec, t_end, step)?;
    let n = spec.n();
    let domain = spec.domain();
    // augmented state (x, τ) with dτ/dt = J_ij
    let field = |z: &[f64]| -> Result<Vec<f64>, DynamicsError> {
        let x = &z[..n];
        let mut v: Vec<f64> = vector_field(spec, x)?.into_iter().map(|c| direction * c).collect();
        v.push(direction * pivot_entry(spec, x)?);
        Ok(v)
    };

    let mut z = x0.as_slice().to_vec();
    z.push(0.0);
    let mut samples = vec![sample(spec, 0.0, 0.0, z[..n].to_vec(), None)?];
    let steps = ((t_end / step) - 1e-9).ceil().max(1.0) as usize;
    let mut left_domain = false;
    let mut t = 0.0;
    for s in 1..=steps {
        let t_next = if s == steps { t_end } else { s as f64 * step };
        let next = match rk4_step(&field, &z, t_next - t) {
            Ok(next) if domain.contains(&next[..n]) => next,
            Ok(_) | Err(DynamicsError::Eval(_)) | Err(DynamicsError::Poisson(_)) => {
                left_domain = true;
                break;
            }
            Err(e) => return Err(e),
        };
        z = next;
        t = t_next;
        samples.push(sample(spec, t, z[n], z[..n].to_vec(), None)?);
    }
    Ok(TrajectoryRecord {
        mode: IntegrationMode::Direct,
        samples,
        left_domain,
    })
}

/// Integrates `dx/dt = J(x) ∇H(x)` on `[0, t_end]` with classical RK4,
/// accumulating `τ` alongside.
pub fn integrate_direct(
    spec: &FamilySpec,
    x0: &StateVector,
    t_end: f64,
    step: f64,
) -> Result<TrajectoryRecord, DynamicsError> {
    direct(spec, x0, t_end, step, 1.0)
}

/// Same as [`integrate_direct`] for the reversed field `-J ∇H`.
pub fn integrate_direct_reversed(
    spec: &FamilySpec,
    x0: &StateVector,
    t_end: f64,
    step: f64,
) -> Result<TrajectoryRecord, DynamicsError> {
    direct(spec, x0, t_end, step, -1.0)
}

/// `H̃(y) = H(x(y))`.
fn reduced_hamiltonian(chart: &DarbouxChart<'_>, y: &[f64]) -> Result<f64, DynamicsError> {
    let x = chart.inverse(y)?;
    Ok(hamiltonian(chart.spec(), &x)?)
}

/// Integrates the reduced canonical system in `τ` from `x0` until the
/// recovered physical time reaches `t_end`. The `τ` step is
/// `step * J_ij(x0)`, so `t` advances by roughly `step` per step.
pub fn integrate_reduced(
    chart: &DarbouxChart<'_>,
    x0: &StateVector,
    t_end: f64,
    step: f64,
) -> Result<TrajectoryRecord, DynamicsError> {
    let spec = chart.spec();
    check_args(spec, t_end, step)?;
    let (i, j) = chart.pivot();
    let y0 = chart.forward(x0.as_slice())?;

    // state (y_i, y_j, t); Casimir coordinates come from y0
    let lift = |z: &[f64]| {
        let mut y = y0.clone();
        y[i] = z[0];
        y[j] = z[1];
        y
    };
    let partial = |y: &[f64], m: usize| -> Result<f64, DynamicsError> {
        let h = 1e-6 * (1.0 + y[m].abs());
        let mut probe = y.to_vec();
        probe[m] = y[m] + h;
        let plus = reduced_hamiltonian(chart, &probe)?;
        probe[m] = y[m] - h;
        let minus = reduced_hamiltonian(chart, &probe)?;
        Ok((plus - minus) / (2.0 * h))
    };
    let field = |z: &[f64]| -> Result<Vec<f64>, DynamicsError> {
        let y = lift(z);
        let x = chart.inverse(&y)?;
        Ok(vec![partial(&y, j)?, -partial(&y, i)?, 1.0 / pivot_entry(spec, &x)?])
    };

    let mut z = vec![y0[i], y0[j], 0.0];
    let mut tau = 0.0;
    let mut samples = vec![sample(spec, 0.0, 0.0, x0.as_slice().to_vec(), Some(y0.clone()))?];
    let nominal = step * pivot_entry(spec, x0.as_slice())?;
    let mut left_domain = false;
    let max_steps = 4 * ((t_end / step).ceil() as usize) + 16;
    for _ in 0..max_steps {
        let remaining = t_end - z[2];
        if remaining <= 1e-9 * step {
            break;
        }
        let current = pivot_entry(spec, &chart.inverse(&lift(&z))?)?;
        let h_tau = if (nominal / current).abs() > remaining {
            remaining * current
        } else {
            nominal
        };
        let next = match rk4_step(&field, &z, h_tau) {
            Ok(next) => next,
            Err(DynamicsError::Darboux(_)) | Err(DynamicsError::Eval(_)) | Err(DynamicsError::Poisson(_)) => {
                left_domain = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let y = lift(&next);
        let x = match chart.inverse(&y) {
            Ok(x) => x,
            Err(_) => {
                left_domain = true;
                break;
            }
        };
        if next[2] <= z[2] {
            // t must increase; a sign flip of J_ij means the chart is exhausted
            left_domain = true;
            break;
        }
        z = next;
        tau += h_tau;
        samples.push(sample(spec, z[2], tau, x, Some(y))?);
    }
    Ok(TrajectoryRecord {
        mode: IntegrationMode::Reduced,
        samples,
        left_domain,
    })
}

/// Largest relative drift of `H` and each `C_k` along a record.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub h_drift: f64,
    pub casimir_drift: Vec<f64>,
    pub tolerance: f64,
    pub flagged: bool,
}

impl DriftReport {
    pub fn max_casimir_drift(&self) -> f64 {
        self.casimir_drift.iter().copied().fold(0.0, f64::max)
    }
}

fn relative_drift(values: impl Iterator<Item = f64>, initial: f64) -> f64 {
    let denom = if initial == 0.0 { 1.0 } else { initial.abs() };
    values.map(|v| (v - initial).abs() / denom).fold(0.0, f64::max)
}

pub fn invariant_drift_report(rec: &TrajectoryRecord, tolerance: f64) -> DriftReport {
    let first = &rec.samples[0];
    let h_drift = relative_drift(rec.samples.iter().map(|s| s.h), first.h);
    let casimir_drift: Vec<f64> = (0..first.casimirs.len())
        .map(|k| relative_drift(rec.samples.iter().map(|s| s.casimirs[k]), first.casimirs[k]))
        .collect();
    let flagged = h_drift > tolerance || casimir_drift.iter().any(|&d| d > tolerance);
    DriftReport {
        h_drift,
        casimir_drift,
        tolerance,
        flagged,
    }
}

/// Least-squares slope of `log(error)` against `log(step)`.
pub fn convergence_order(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let (sx, sy, sxx, sxy) = points.iter().fold((0.0, 0.0, 0.0, 0.0), |acc, &(h, e)| {
        let (x, y) = (h.ln(), e.ln());
        (acc.0 + x, acc.1 + y, acc.2 + x * x, acc.3 + x * y)
    });
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

/// Sup-norm comparison of a reduced run against a direct run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryComparison {
    pub sup_norm: f64,
    /// End of the common time span.
    pub t_common: f64,
    pub compared: usize,
}

/// Interpolates the direct record (cubic Hermite, using the exact vector
/// field as the derivative) at each reduced sample time inside the common
/// span and returns the largest coordinate difference.
pub fn compare_trajectories(
    spec: &FamilySpec,
    direct: &TrajectoryRecord,
    reduced: &TrajectoryRecord,
) -> Result<TrajectoryComparison, DynamicsError> {
    let t_common = direct.last().t.min(reduced.last().t);
    let ds = &direct.samples;
    let mut sup_norm = 0.0f64;
    let mut compared = 0;
    for s in reduced.samples.iter().filter(|s| s.t <= t_common) {
        let hi = ds.partition_point(|d| d.t < s.t).clamp(1, ds.len() - 1);
        let (a, b) = (&ds[hi - 1], &ds[hi]);
        let h = b.t - a.t;
        let u = (s.t - a.t) / h;
        let fa = vector_field(spec, &a.x)?;
        let fb = vector_field(spec, &b.x)?;
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        for m in 0..spec.n() {
            let interp = h00 * a.x[m] + h10 * h * fa[m] + h01 * b.x[m] + h11 * h * fb[m];
            sup_norm = sup_norm.max((interp - s.x[m]).abs());
        }
        compared += 1;
    }
    Ok(TrajectoryComparison {
        sup_norm,
        t_common,
        compared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::{Context, Expr};
    use crate::fixtures::random_family;
    use crate::presets;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn euler_top() -> FamilySpec {
        presets::euler_top_default()
    }

    #[test]
    fn argument_errors() {
        let spec = euler_top();
        let x0 = StateVector::new(&spec, vec![0.9, 1.1, 1.3]).unwrap();
        assert_eq!(
            integrate_direct(&spec, &x0, 1.0, 0.0),
            Err(DynamicsError::InvalidStep(0.0))
        );
        assert_eq!(
            integrate_direct(&spec, &x0, 1.0, -1e-3),
            Err(DynamicsError::InvalidStep(-1e-3))
        );
        let bare = presets::build_example1(3, None, None).unwrap();
        let x0 = StateVector::new(&bare, vec![1.5, 3.5, 5.5]).unwrap();
        assert_eq!(
            integrate_direct(&bare, &x0, 1.0, 1e-3),
            Err(DynamicsError::MissingHamiltonian)
        );
    }

    #[test]
    fn casimir_hamiltonian_is_stationary() {
        let base = presets::build_example1(3, None, None).unwrap();
        // H = C_3 = (x2 - x3)/(x1 - x2)
        let h = Expr::parse("(x2 - x3)/(x1 - x2)", Context::Multivariate(3)).unwrap();
        let spec = base.with_hamiltonian(h).unwrap();
        let x0 = StateVector::new(&spec, vec![1.5, 3.5, 5.5]).unwrap();
        let rec = integrate_direct(&spec, &x0, 1.0, 0.01).unwrap();
        assert!(!rec.left_domain);
        for s in &rec.samples {
            for (a, b) in s.x.iter().zip(x0.as_slice()) {
                assert!((a - b).abs() <= 1e-15);
            }
        }
        let d = invariant_drift_report(&rec, 1e-12);
        assert_eq!(d.h_drift, 0.0);
        assert_eq!(d.max_casimir_drift(), 0.0);
        assert!(!d.flagged);
    }

    #[test]
    fn euler_top_leaves_positive_orthant() {
        let spec = euler_top();
        let x0 = StateVector::new(&spec, vec![0.9, 1.1, 1.3]).unwrap();
        let rec = integrate_direct(&spec, &x0, 1.0, 1e-3).unwrap();
        // x3 decreases through the lower face of the box well before t = 1
        assert!(rec.left_domain);
        let last = rec.last();
        assert!(last.t > 0.05 && last.t < 0.2, "{}", last.t);
        assert!(rec.samples.windows(2).all(|w| w[1].t > w[0].t));
        assert!(rec.samples.windows(2).all(|w| w[1].tau > w[0].tau));
        let d = invariant_drift_report(&rec, 1e-8);
        assert!(d.h_drift <= 1e-8, "{}", d.h_drift);
        // both invariants are limited by the same RK4 budget
        assert!(d.max_casimir_drift() <= 100.0 * 1e-8, "{}", d.max_casimir_drift());
    }

    #[test]
    fn rk4_order_on_euler_top() {
        let spec = euler_top();
        let x0 = StateVector::new(&spec, vec![0.9, 1.1, 1.3]).unwrap();
        // a horizon that stays inside the box at every step size
        let t_end = 0.064;
        let pts: Vec<(f64, f64)> = [1e-3, 2e-3, 4e-3, 8e-3]
            .iter()
            .map(|&h| {
                let rec = integrate_direct(&spec, &x0, t_end, h).unwrap();
                assert!(!rec.left_domain);
                (h, invariant_drift_report(&rec, 1.0).h_drift)
            })
            .collect();
        let ratio = pts[1].1 / pts[0].1;
        assert!((8.0..=32.0).contains(&ratio), "{ratio}");
        assert!(convergence_order(&pts) >= 3.5);
    }

    #[test]
    fn reversibility_on_random_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut checked = 0;
        for _ in 0..20 {
            let spec = random_family(&mut rng);
            let x0 = StateVector::new(&spec, spec.domain().center()).unwrap();
            let fwd = integrate_direct(&spec, &x0, 0.05, 1e-3).unwrap();
            if fwd.left_domain {
                continue;
            }
            let x1 = StateVector::new(&spec, fwd.last().x.clone()).unwrap();
            let back = integrate_direct_reversed(&spec, &x1, 0.05, 1e-3).unwrap();
            if back.left_domain {
                continue;
            }
            for (a, b) in back.last().x.iter().zip(x0.as_slice()) {
                assert!((a - b).abs() <= 1e-7);
            }
            checked += 1;
        }
        assert!(checked >= 5, "{checked}");
    }

    #[test]
    fn reduced_run_holds_casimirs_and_matches_direct() {
        let spec = euler_top();
        let chart = DarbouxChart::new(&spec).unwrap();
        let x0 = StateVector::new(&spec, vec![0.9, 1.1, 1.3]).unwrap();
        let reduced = integrate_reduced(&chart, &x0, 0.06, 1e-3).unwrap();
        assert!(!reduced.left_domain);
        let y0 = reduced.samples[0].y.clone().unwrap();
        for s in &reduced.samples {
            assert_eq!(s.y.as_ref().unwrap()[2], y0[2]);
        }
        assert!(reduced.samples.windows(2).all(|w| w[1].t > w[0].t));
        // J_12 > 0 on this box, so τ increases
        assert_eq!(chart.pivot_sign(), 1.0);
        assert!(reduced.samples.windows(2).all(|w| w[1].tau > w[0].tau));
        assert!((reduced.last().t - 0.06).abs() < 1e-9);
        let drift = invariant_drift_report(&reduced, 1e-7);
        assert!(drift.h_drift <= 1e-7, "{}", drift.h_drift);

        let direct = integrate_direct(&spec, &x0, 0.06, 1e-3).unwrap();
        let cmp = compare_trajectories(&spec, &direct, &reduced).unwrap();
        assert!(cmp.compared > 50);
        assert!(cmp.sup_norm <= 1e-5, "{}", cmp.sup_norm);
    }

    #[test]
    fn order_fit_recovers_power_law() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h| (h, 3.0 * h * h * h * h)).collect();
        assert!((convergence_order(&pts) - 4.0).abs() < 1e-12);
    }
}
