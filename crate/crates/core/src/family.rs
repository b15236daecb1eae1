//! Family instances: potentials `psi_k`, the factor `eta`, the constant
//! skew matrix `kappa`, the domain box and the pivot pair.
//!
//! The structure matrix of an instance is
//!
//! ```text
//! J_ij(x) = eta(x) * chi_ij(x) / (psi_i'(x_i) * psi_j'(x_j)),
//! chi_ij  = psi_i(x_i) - psi_j(x_j) + kappa_ij,
//! ```
//!
//! so the user supplies the potentials `psi_k` directly and `phi_k = 1/psi_k'`
//! is derived. Instances can also be built from `phi_k`, in which case
//! `psi_k` is obtained by adaptive quadrature from the interval midpoint.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::exprlang::{Context, EvalError, Expr};
use crate::sampling;

/// Absolute tolerance for the skew and zero-sum checks on a κ matrix.
pub const KAPPA_TOLERANCE: f64 = 1e-12;

/// Default number of certification samples.
pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error("invalid family: {0}")]
    Structure(String),
    #[error("kappa is not skew-symmetric at ({i},{j}): residual {residual:e}")]
    NotSkew { i: usize, j: usize, residual: f64 },
    #[error("kappa violates the zero-sum condition at triple ({},{},{}): residual {residual:e}", triple.0, triple.1, triple.2)]
    ZeroSum {
        triple: (usize, usize, usize),
        residual: f64,
    },
    #[error("{value} lies outside the potential image [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("point {point:?} lies outside the domain box")]
    OutsideDomain { point: Vec<f64> },
    #[error("validation failed: {function} {reason} at {witness:?}")]
    Validation {
        function: String,
        reason: String,
        witness: Vec<f64>,
        report: Box<ValidationReport>,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone)]
enum PotentialForm {
    Primitive {
        psi: Expr,
        psi_prime: Expr,
        psi_second: Expr,
    },
    Quadrature {
        phi: Expr,
        phi_prime: Expr,
        origin: f64,
    },
}

/// One potential `psi_k` on its coordinate interval.
#[derive(Debug, Clone)]
pub struct UnivariatePotential {
    form: PotentialForm,
    lo: f64,
    hi: f64,
    image: (f64, f64),
}

impl UnivariatePotential {
    /// Builds a potential from `psi` itself; derivatives are symbolic.
    pub fn from_psi(psi: Expr, lo: f64, hi: f64) -> Result<Self, FamilyError> {
        check_univariate(&psi, "psi")?;
        let psi_prime = psi.differentiate(0).expect("univariate");
        let psi_second = psi_prime.differentiate(0).expect("univariate");
        Self::finish(
            PotentialForm::Primitive {
                psi,
                psi_prime,
                psi_second,
            },
            lo,
            hi,
        )
    }

    /// Builds a potential from `phi`, with `psi(x) = ∫_{mid}^{x} dt / phi(t)`.
    /// Values of `psi` carry quadrature error of order 1e-12.
    pub fn from_phi(phi: Expr, lo: f64, hi: f64) -> Result<Self, FamilyError> {
        check_univariate(&phi, "phi")?;
        let phi_prime = phi.differentiate(0).expect("univariate");
        Self::finish(
            PotentialForm::Quadrature {
                phi,
                phi_prime,
                origin: 0.5 * (lo + hi),
            },
            lo,
            hi,
        )
    }

    fn finish(form: PotentialForm, lo: f64, hi: f64) -> Result<Self, FamilyError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(FamilyError::Structure(format!(
                "interval [{lo}, {hi}] must be finite with lo < hi"
            )));
        }
        let mut p = UnivariatePotential {
            form,
            lo,
            hi,
            image: (0.0, 0.0),
        };
        let a = p.psi(lo)?;
        let b = p.psi(hi)?;
        p.image = (a.min(b), a.max(b));
        Ok(p)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// `[min, max]` of psi over the interval, from the endpoint values.
    pub fn image(&self) -> (f64, f64) {
        self.image
    }

    pub fn is_quadrature(&self) -> bool {
        matches!(self.form, PotentialForm::Quadrature { .. })
    }

    /// The expression `psi` was built from, if it was given directly.
    pub fn psi_expr(&self) -> Option<&Expr> {
        match &self.form {
            PotentialForm::Primitive { psi, .. } => Some(psi),
            PotentialForm::Quadrature { .. } => None,
        }
    }

    /// The expression `phi` was built from, in quadrature mode.
    pub fn phi_expr(&self) -> Option<&Expr> {
        match &self.form {
            PotentialForm::Quadrature { phi, .. } => Some(phi),
            PotentialForm::Primitive { .. } => None,
        }
    }

    pub fn psi(&self, x: f64) -> Result<f64, EvalError> {
        match &self.form {
            PotentialForm::Primitive { psi, .. } => psi.eval1(x),
            PotentialForm::Quadrature { phi, origin, .. } => {
                integrate_reciprocal(phi, *origin, x)
            }
        }
    }

    pub fn psi_prime(&self, x: f64) -> Result<f64, EvalError> {
        match &self.form {
            PotentialForm::Primitive { psi_prime, .. } => psi_prime.eval1(x),
            PotentialForm::Quadrature { phi, .. } => Ok(1.0 / phi.eval1(x)?),
        }
    }

    pub fn psi_second(&self, x: f64) -> Result<f64, EvalError> {
        match &self.form {
            PotentialForm::Primitive { psi_second, .. } => psi_second.eval1(x),
            PotentialForm::Quadrature { phi, phi_prime, .. } => {
                let f = phi.eval1(x)?;
                Ok(-phi_prime.eval1(x)? / (f * f))
            }
        }
    }

    /// `phi = 1/psi'`.
    pub fn phi(&self, x: f64) -> Result<f64, EvalError> {
        Ok(1.0 / self.psi_prime(x)?)
    }

    /// Human-readable closed form of `psi` in coordinate `index` of an
    /// `n`-dimensional instance.
    pub fn describe(&self, index: usize, n: usize) -> String {
        match &self.form {
            PotentialForm::Primitive { psi, .. } => psi
                .lift(index, n)
                .map(|e| e.to_string())
                .unwrap_or_else(|_| psi.to_string()),
            PotentialForm::Quadrature { phi, origin, .. } => {
                format!("integral from {origin} to x{} of 1/({phi})", index + 1)
            }
        }
    }
}

fn check_univariate(e: &Expr, what: &str) -> Result<(), FamilyError> {
    if e.context() != Context::Univariate {
        return Err(FamilyError::Structure(format!(
            "{what} must be a univariate expression in `x`"
        )));
    }
    Ok(())
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

// ∫_a^b dt / phi(t) by adaptive Simpson with Richardson correction.
fn integrate_reciprocal(phi: &Expr, a: f64, b: f64) -> Result<f64, EvalError> {
    if a == b {
        return Ok(0.0);
    }
    let f = |t: f64| phi.eval1(t).map(|v| 1.0 / v);
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = simpson(fa, fm, fb, a, b);
    adaptive(&f, a, b, fa, fm, fb, whole, 1e-13, 48)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> Result<f64, EvalError>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, EvalError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

/// `zeta = psi^{-1}`: the `x` in the interval with `psi(x) = value`.
///
/// Newton iteration safeguarded by a bisection bracket, which always
/// converges because psi is strictly monotone on the interval.
pub fn inverse_potential(p: &UnivariatePotential, value: f64) -> Result<f64, FamilyError> {
    let (imin, imax) = p.image();
    let slack = 1e-12 * (1.0 + value.abs());
    if !value.is_finite() || value < imin - slack || value > imax + slack {
        return Err(FamilyError::OutOfRange {
            value,
            lo: imin,
            hi: imax,
        });
    }
    let psi_lo = p.psi(p.lo)?;
    let psi_hi = p.psi(p.hi)?;
    let orient = if psi_hi >= psi_lo { 1.0 } else { -1.0 };
    // g is increasing on [lo, hi]
    let g = |x: f64| p.psi(x).map(|v| orient * (v - value));
    let g_lo = orient * (psi_lo - value);
    let g_hi = orient * (psi_hi - value);
    if g_lo >= 0.0 {
        return Ok(p.lo);
    }
    if g_hi <= 0.0 {
        return Ok(p.hi);
    }

    let (mut a, mut b) = (p.lo, p.hi);
    let mut x = p.lo + (-g_lo) / (g_hi - g_lo) * (p.hi - p.lo);
    let mut best = (f64::INFINITY, x);
    for _ in 0..200 {
        let gx = g(x)?;
        if gx.abs() < best.0 {
            best = (gx.abs(), x);
        }
        if gx == 0.0 {
            return Ok(x);
        }
        if gx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let slope = orient * p.psi_prime(x)?;
        let newton = x - gx / slope;
        let next = if slope > 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE)
            || b - a <= 2.0 * f64::EPSILON * a.abs().max(b.abs())
        {
            let gn = g(next)?;
            if gn.abs() < best.0 {
                best = (gn.abs(), next);
            }
            break;
        }
        x = next;
    }
    Ok(best.1)
}

/// The constant skew matrix κ, stored through its generator:
/// `kappa(i, j) = lambda_i - lambda_j`.
///
/// Every matrix of this form is skew and satisfies
/// `kappa_ij + kappa_jk + kappa_ki = 0`, and every such matrix has this form.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaSpec {
    lambda: Vec<f64>,
}

impl KappaSpec {
    pub fn from_lambda(lambda: Vec<f64>) -> Self {
        KappaSpec { lambda }
    }

    pub fn zero(n: usize) -> Self {
        KappaSpec {
            lambda: vec![0.0; n],
        }
    }

    /// Recovers the generator from an explicit `n×n` matrix, with
    /// `lambda_i = m[i][0]`. Errors report 1-based indices.
    pub fn from_matrix(m: &[Vec<f64>]) -> Result<Self, FamilyError> {
        let n = m.len();
        if n == 0 || m.iter().any(|row| row.len() != n) {
            return Err(FamilyError::Structure("kappa matrix must be square".into()));
        }
        for i in 0..n {
            for j in i..n {
                let residual = (m[i][j] + m[j][i]).abs();
                if residual > KAPPA_TOLERANCE || !residual.is_finite() {
                    return Err(FamilyError::NotSkew {
                        i: i + 1,
                        j: j + 1,
                        residual,
                    });
                }
            }
        }
        let mut worst = ((0, 0, 0), 0.0f64);
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let residual = (m[i][j] + m[j][k] + m[k][i]).abs();
                    if residual > worst.1 {
                        worst = ((i + 1, j + 1, k + 1), residual);
                    }
                }
            }
        }
        if worst.1 > KAPPA_TOLERANCE {
            return Err(FamilyError::ZeroSum {
                triple: worst.0,
                residual: worst.1,
            });
        }
        Ok(KappaSpec {
            lambda: m.iter().map(|row| row[0]).collect(),
        })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn kappa(&self, i: usize, j: usize) -> f64 {
        self.lambda[i] - self.lambda[j]
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.kappa(i, j)).collect())
            .collect()
    }
}

/// Free function form of [`KappaSpec::from_matrix`].
pub fn kappa_from_matrix(m: &[Vec<f64>]) -> Result<KappaSpec, FamilyError> {
    KappaSpec::from_matrix(m)
}

/// Axis-aligned domain box.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lower.len()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }
}

/// A point of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(spec: &FamilySpec, x: Vec<f64>) -> Result<Self, FamilyError> {
        if !spec.domain().contains(&x) {
            return Err(FamilyError::OutsideDomain { point: x });
        }
        Ok(StateVector(x))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Optional Hamiltonian and its symbolic gradient.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub expr: Expr,
    pub gradient: Vec<Expr>,
}

/// A complete family instance.
#[derive(Debug, Clone)]
pub struct FamilySpec {
    potentials: Vec<UnivariatePotential>,
    eta: Expr,
    eta_gradient: Vec<Expr>,
    kappa: KappaSpec,
    pivot: (usize, usize),
    hamiltonian: Option<Hamiltonian>,
}

impl FamilySpec {
    /// `pivot` is zero-based.
    pub fn new(
        potentials: Vec<UnivariatePotential>,
        eta: Expr,
        kappa: KappaSpec,
        pivot: (usize, usize),
    ) -> Result<Self, FamilyError> {
        let n = potentials.len();
        if n < 2 {
            return Err(FamilyError::Structure("dimension must be at least 2".into()));
        }
        if eta.context() != Context::Multivariate(n) {
            return Err(FamilyError::Structure(format!(
                "eta must be an expression in x1..x{n}"
            )));
        }
        if kappa.len() != n {
            return Err(FamilyError::Structure(format!(
                "kappa generator has length {}, expected {n}",
                kappa.len()
            )));
        }
        let (i, j) = pivot;
        if i >= n || j >= n || i == j {
            return Err(FamilyError::Structure(format!(
                "pivot ({}, {}) must be two distinct indices in 1..{n}",
                i + 1,
                j + 1
            )));
        }
        let eta_gradient = eta.gradient();
        Ok(FamilySpec {
            potentials,
            eta,
            eta_gradient,
            kappa,
            pivot,
            hamiltonian: None,
        })
    }

    pub fn with_hamiltonian(mut self, h: Expr) -> Result<Self, FamilyError> {
        if h.context() != Context::Multivariate(self.n()) {
            return Err(FamilyError::Structure(format!(
                "hamiltonian must be an expression in x1..x{}",
                self.n()
            )));
        }
        let gradient = h.gradient();
        self.hamiltonian = Some(Hamiltonian { expr: h, gradient });
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.potentials.len()
    }

    pub fn potentials(&self) -> &[UnivariatePotential] {
        &self.potentials
    }

    pub fn potential(&self, k: usize) -> &UnivariatePotential {
        &self.potentials[k]
    }

    pub fn eta(&self) -> &Expr {
        &self.eta
    }

    pub fn eta_gradient(&self) -> &[Expr] {
        &self.eta_gradient
    }

    pub fn kappa(&self) -> &KappaSpec {
        &self.kappa
    }

    /// Zero-based pivot pair.
    pub fn pivot(&self) -> (usize, usize) {
        self.pivot
    }

    pub fn hamiltonian(&self) -> Option<&Hamiltonian> {
        self.hamiltonian.as_ref()
    }

    pub fn domain(&self) -> DomainBox {
        let (lower, upper) = self.potentials.iter().map(|p| p.interval()).unzip();
        DomainBox { lower, upper }
    }

    /// Indices of the Casimir coordinates, i.e. everything but the pivot.
    pub fn casimir_indices(&self) -> Vec<usize> {
        let (i, j) = self.pivot;
        (0..self.n()).filter(|&k| k != i && k != j).collect()
    }

    pub fn chi(&self, i: usize, j: usize, x: &[f64]) -> Result<f64, EvalError> {
        chi(self, i, j, x)
    }
}

/// `chi_ij(x) = psi_i(x_i) - psi_j(x_j) + kappa_ij`.
///
/// Panics if `i` or `j` is not a valid index.
pub fn chi(spec: &FamilySpec, i: usize, j: usize, x: &[f64]) -> Result<f64, EvalError> {
    let a = spec.potentials[i].psi(x[i])?;
    let b = spec.potentials[j].psi(x[j])?;
    Ok(a - b + spec.kappa.kappa(i, j))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
    Mixed,
    Unknown,
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => "positive",
            Sign::Negative => "negative",
            Sign::Mixed => "mixed",
            Sign::Unknown => "unknown",
        })
    }
}

/// Sampled range of one certified function.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionCheck {
    pub name: String,
    pub sign: Sign,
    pub min: f64,
    pub max: f64,
    pub min_abs: f64,
    pub failure: Option<(String, Vec<f64>)>,
}

/// Outcome of [`validate_family`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<FunctionCheck>,
    pub method: &'static str,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.failure.is_none())
    }

    pub fn check(&self, name: &str) -> Option<&FunctionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const VALIDATION_METHOD: &str =
    "sample-based: sign constancy on a low-discrepancy point set; not a proof";

fn certify(name: String, values: &[Result<f64, EvalError>], points: &[Vec<f64>]) -> FunctionCheck {
    let mut check = FunctionCheck {
        name,
        sign: Sign::Unknown,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        min_abs: f64::INFINITY,
        failure: None,
    };
    for (value, point) in values.iter().zip(points) {
        let v = match value {
            Ok(v) => *v,
            Err(e) => {
                check.failure = Some((format!("cannot be evaluated ({e})"), point.clone()));
                break;
            }
        };
        if v == 0.0 {
            check.failure = Some(("vanishes".into(), point.clone()));
            break;
        }
        check.min = check.min.min(v);
        check.max = check.max.max(v);
        check.min_abs = check.min_abs.min(v.abs());
        let s = if v > 0.0 { Sign::Positive } else { Sign::Negative };
        match check.sign {
            Sign::Unknown => check.sign = s,
            current if current != s => {
                check.sign = Sign::Mixed;
                check.failure = Some(("changes sign".into(), point.clone()));
                break;
            }
            _ => {}
        }
    }
    check
}

/// Certifies the nonvanishing hypotheses on `samples` points of the box:
/// every `psi_k'`, `eta`, and `chi` at the pivot pair must keep one sign.
pub fn validate_family(
    spec: &FamilySpec,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport, FamilyError> {
    if samples == 0 {
        return Err(FamilyError::Structure("at least one sample is required".into()));
    }
    let domain = spec.domain();
    let points = sampling::box_points(&domain.lower, &domain.upper, samples, seed);
    let mut checks = Vec::with_capacity(spec.n() + 2);

    for (k, p) in spec.potentials.iter().enumerate() {
        let values: Vec<_> = points.par_iter().map(|x| p.psi_prime(x[k])).collect();
        checks.push(certify(format!("psi_prime[{}]", k + 1), &values, &points));
    }
    let values: Vec<_> = points.par_iter().map(|x| spec.eta.eval(x)).collect();
    checks.push(certify("eta".into(), &values, &points));
    let (i, j) = spec.pivot;
    let values: Vec<_> = points.par_iter().map(|x| chi(spec, i, j, x)).collect();
    checks.push(certify(format!("chi[{},{}]", i + 1, j + 1), &values, &points));

    let report = ValidationReport {
        samples,
        seed,
        checks,
        method: VALIDATION_METHOD,
    };
    if let Some(failed) = report.checks.iter().find(|c| c.failure.is_some()) {
        let (reason, witness) = failed.failure.clone().unwrap();
        return Err(FamilyError::Validation {
            function: failed.name.clone(),
            reason,
            witness,
            report: Box::new(report),
        });
    }
    Ok(report)
}
