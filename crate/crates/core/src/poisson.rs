//! Structure matrices of family instances: evaluation, Jacobi-identity
//! residuals, rank certificates and the closed-form Casimir invariants.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::exprlang::{EvalError, Expr};
use crate::family::FamilySpec;

/// Relative cut below which a singular value counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Smallest acceptable `sigma_2 / sigma_1` for a rank-2 certificate.
pub const SIGMA2_FLOOR: f64 = 1e-8;
/// Bound on the normalized Jacobi residual.
pub const JACOBI_TOLERANCE: f64 = 1e-8;
/// Bound on the normalized kernel residual `‖J ∇C_k‖_∞ / scale`.
pub const KERNEL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoissonError {
    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("C_{k} is a trivial Casimir: {k} is a pivot index")]
    TrivialCasimir { k: usize },
    #[error("pivot chi vanishes at {point:?}")]
    SingularPivot { point: Vec<f64> },
    #[error("rank {rank} where {expected} was expected; singular values {singular_values:?}")]
    RankMismatch {
        rank: usize,
        expected: usize,
        singular_values: Vec<f64>,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `J(x)` at a point. Only the upper triangle is computed; the lower
/// triangle is its exact negation and the diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMatrix {
    pub matrix: DMatrix<f64>,
    pub point: Vec<f64>,
}

impl StructureMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.amax()
    }
}

// Per-coordinate values needed to assemble J and its partials.
struct Pointwise {
    psi: Vec<f64>,
    dpsi: Vec<f64>,
    eta: f64,
}

impl Pointwise {
    fn at(spec: &FamilySpec, x: &[f64]) -> Result<Self, EvalError> {
        let mut psi = Vec::with_capacity(spec.n());
        let mut dpsi = Vec::with_capacity(spec.n());
        for (k, p) in spec.potentials().iter().enumerate() {
            psi.push(p.psi(x[k])?);
            dpsi.push(p.psi_prime(x[k])?);
        }
        Ok(Pointwise {
            psi,
            dpsi,
            eta: spec.eta().eval(x)?,
        })
    }

    fn chi(&self, spec: &FamilySpec, i: usize, j: usize) -> f64 {
        self.psi[i] - self.psi[j] + spec.kappa().kappa(i, j)
    }
}

fn check_point(spec: &FamilySpec, x: &[f64]) -> Result<(), PoissonError> {
    if x.len() != spec.n() {
        return Err(EvalError::PointLength {
            expected: spec.n(),
            got: x.len(),
        }
        .into());
    }
    Ok(())
}

fn check_index(n: usize, index: usize) -> Result<(), PoissonError> {
    if index >= n {
        return Err(PoissonError::IndexOutOfRange { index, n });
    }
    Ok(())
}

/// `J_ij = eta * chi_ij / (psi_i' psi_j')`.
pub fn eval_j(spec: &FamilySpec, x: &[f64]) -> Result<StructureMatrix, PoissonError> {
    check_point(spec, x)?;
    let pw = Pointwise::at(spec, x)?;
    let n = spec.n();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = pw.eta * pw.chi(spec, i, j) / (pw.dpsi[i] * pw.dpsi[j]);
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
    Ok(StructureMatrix {
        matrix: m,
        point: x.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartialsMode {
    Symbolic,
    FiniteDifference,
}

impl PartialsMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PartialsMode::Symbolic => "symbolic",
            PartialsMode::FiniteDifference => "finite-difference",
        }
    }
}

/// A skew matrix-valued function with first partials.
pub trait MatrixField {
    fn dim(&self) -> usize;
    fn entries(&self, x: &[f64]) -> Result<DMatrix<f64>, EvalError>;
    /// `result[l][(i, j)] = ∂_l J_ij`.
    fn partials(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>, EvalError>;
    fn partials_mode(&self) -> PartialsMode;
}

impl MatrixField for FamilySpec {
    fn dim(&self) -> usize {
        self.n()
    }

    fn entries(&self, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        eval_j(self, x).map(|s| s.matrix).map_err(|e| match e {
            PoissonError::Eval(e) => e,
            other => unreachable!("{other}"),
        })
    }

    // With phi = 1/psi' and g_ij = chi_ij phi_i phi_j, J_ij = eta g_ij and
    //   ∂_l J_ij = (∂_l eta) g_ij + eta ∂_l g_ij,
    //   ∂_i g_ij = phi_j + chi_ij phi_i' phi_j,
    //   ∂_j g_ij = -phi_i + chi_ij phi_i phi_j',
    // where phi' = -psi'' / psi'^2.
    fn partials(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>, EvalError> {
        let n = self.n();
        let pw = Pointwise::at(self, x)?;
        let mut phi = Vec::with_capacity(n);
        let mut dphi = Vec::with_capacity(n);
        for (k, p) in self.potentials().iter().enumerate() {
            let d2 = p.psi_second(x[k])?;
            phi.push(1.0 / pw.dpsi[k]);
            dphi.push(-d2 / (pw.dpsi[k] * pw.dpsi[k]));
        }
        let deta = self
            .eta_gradient()
            .iter()
            .map(|g| g.eval(x))
            .collect::<Result<Vec<_>, _>>()?;

        let mut out = vec![DMatrix::zeros(n, n); n];
        for i in 0..n {
            for j in i + 1..n {
                let chi = pw.chi(self, i, j);
                let g = chi * phi[i] * phi[j];
                let dg_i = phi[j] + chi * dphi[i] * phi[j];
                let dg_j = -phi[i] + chi * phi[i] * dphi[j];
                for (l, d) in out.iter_mut().enumerate() {
                    let mut v = deta[l] * g;
                    if l == i {
                        v += pw.eta * dg_i;
                    } else if l == j {
                        v += pw.eta * dg_j;
                    }
                    d[(i, j)] = v;
                    d[(j, i)] = -v;
                }
            }
        }
        Ok(out)
    }

    fn partials_mode(&self) -> PartialsMode {
        PartialsMode::Symbolic
    }
}

/// A structure matrix given entry by entry, outside the family. Only the
/// strict upper triangle is supplied; the rest follows from skew-symmetry.
#[derive(Debug, Clone)]
pub struct ForeignField {
    n: usize,
    upper: Vec<(usize, usize, Expr)>,
    symbolic: Option<Vec<(usize, usize, Vec<Expr>)>>,
}

impl ForeignField {
    /// Entries are `(i, j, J_ij)` with zero-based `i < j`; missing entries
    /// are zero. Partials use central differences.
    pub fn new(n: usize, upper: Vec<(usize, usize, Expr)>) -> Result<Self, PoissonError> {
        for (i, j, _) in &upper {
            check_index(n, *i)?;
            check_index(n, *j)?;
            if i >= j {
                return Err(PoissonError::IndexOutOfRange { index: *i, n: *j });
            }
        }
        Ok(ForeignField {
            n,
            upper,
            symbolic: None,
        })
    }

    /// Switches to symbolic partials of the supplied entries.
    pub fn with_symbolic_partials(mut self) -> Self {
        self.symbolic = Some(
            self.upper
                .iter()
                .map(|(i, j, e)| (*i, *j, e.gradient()))
                .collect(),
        );
        self
    }
}

impl MatrixField for ForeignField {
    fn dim(&self) -> usize {
        self.n
    }

    fn entries(&self, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, e) in &self.upper {
            let v = e.eval(x)?;
            m[(*i, *j)] = v;
            m[(*j, *i)] = -v;
        }
        Ok(m)
    }

    fn partials(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>, EvalError> {
        let n = self.n;
        if let Some(sym) = &self.symbolic {
            let mut out = vec![DMatrix::zeros(n, n); n];
            for (i, j, grad) in sym {
                for (l, g) in grad.iter().enumerate() {
                    let v = g.eval(x)?;
                    out[l][(*i, *j)] = v;
                    out[l][(*j, *i)] = -v;
                }
            }
            return Ok(out);
        }
        let mut out = Vec::with_capacity(n);
        let mut probe = x.to_vec();
        for l in 0..n {
            let h = 1e-6 * x[l].abs().max(1.0);
            probe[l] = x[l] + h;
            let plus = self.entries(&probe)?;
            probe[l] = x[l] - h;
            let minus = self.entries(&probe)?;
            probe[l] = x[l];
            out.push((plus - minus) / (2.0 * h));
        }
        Ok(out)
    }

    fn partials_mode(&self) -> PartialsMode {
        if self.symbolic.is_some() {
            PartialsMode::Symbolic
        } else {
            PartialsMode::FiniteDifference
        }
    }
}

/// `J` and all its partials at one point, for evaluating many residuals.
#[derive(Debug, Clone)]
pub struct JacobiEvaluation {
    pub entries: DMatrix<f64>,
    pub partials: Vec<DMatrix<f64>>,
    pub mode: PartialsMode,
    /// `(1 + max|J|) * (1 + max|∂J|)`.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiResidual {
    pub value: f64,
    pub scale: f64,
    pub mode: PartialsMode,
}

impl JacobiResidual {
    pub fn normalized(&self) -> f64 {
        self.value.abs() / self.scale
    }
}

impl JacobiEvaluation {
    pub fn at<F: MatrixField + ?Sized>(field: &F, x: &[f64]) -> Result<Self, PoissonError> {
        if x.len() != field.dim() {
            return Err(EvalError::PointLength {
                expected: field.dim(),
                got: x.len(),
            }
            .into());
        }
        let entries = field.entries(x)?;
        let partials = field.partials(x)?;
        let max_partial = partials.iter().map(|p| p.amax()).fold(0.0, f64::max);
        let scale = (1.0 + entries.amax()) * (1.0 + max_partial);
        Ok(JacobiEvaluation {
            entries,
            partials,
            mode: field.partials_mode(),
            scale,
        })
    }

    /// `Σ_l (J_li ∂_l J_jk + J_lj ∂_l J_ki + J_lk ∂_l J_ij)`.
    pub fn residual(&self, i: usize, j: usize, k: usize) -> Result<JacobiResidual, PoissonError> {
        let n = self.entries.nrows();
        for idx in [i, j, k] {
            check_index(n, idx)?;
        }
        let j_ = &self.entries;
        let d = &self.partials;
        let value = (0..n)
            .map(|l| {
                j_[(l, i)] * d[l][(j, k)] + j_[(l, j)] * d[l][(k, i)] + j_[(l, k)] * d[l][(i, j)]
            })
            .sum();
        Ok(JacobiResidual {
            value,
            scale: self.scale,
            mode: self.mode,
        })
    }

    /// Largest normalized residual over all triples `i < j < k`.
    pub fn max_normalized(&self) -> f64 {
        let n = self.entries.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let r = self.residual(i, j, k).expect("indices in range");
                    worst = worst.max(r.normalized());
                }
            }
        }
        worst
    }
}

/// Jacobi-identity residual for one index triple.
pub fn jacobi_residual<F: MatrixField + ?Sized>(
    field: &F,
    i: usize,
    j: usize,
    k: usize,
    x: &[f64],
) -> Result<JacobiResidual, PoissonError> {
    JacobiEvaluation::at(field, x)?.residual(i, j, k)
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `RANK_TOLERANCE * sigma_1`.
pub fn numerical_rank(sv: &[f64]) -> usize {
    match sv.first() {
        Some(&s1) if s1 > 0.0 => sv.iter().filter(|&&s| s > RANK_TOLERANCE * s1).count(),
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankCertificate {
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

impl RankCertificate {
    /// `sigma_k / sigma_1` (1-based `k`), zero when `k > n`.
    pub fn ratio(&self, k: usize) -> f64 {
        match (self.singular_values.first(), self.singular_values.get(k - 1)) {
            (Some(&s1), Some(&sk)) if s1 > 0.0 => sk / s1,
            _ => 0.0,
        }
    }
}

/// SVD of `J(x)`; every family matrix with a nonvanishing pivot χ has
/// rank exactly 2.
pub fn rank_certificate(spec: &FamilySpec, x: &[f64]) -> Result<RankCertificate, PoissonError> {
    let j = eval_j(spec, x)?;
    let singular_values = singular_values(&j.matrix);
    let rank = numerical_rank(&singular_values);
    if rank != 2 {
        return Err(PoissonError::RankMismatch {
            rank,
            expected: 2,
            singular_values,
        });
    }
    Ok(RankCertificate {
        singular_values,
        rank,
    })
}

fn casimir_parts(spec: &FamilySpec, k: usize, x: &[f64]) -> Result<(usize, usize), PoissonError> {
    check_point(spec, x)?;
    check_index(spec.n(), k)?;
    let (i, j) = spec.pivot();
    if k == i || k == j {
        return Err(PoissonError::TrivialCasimir { k: k + 1 });
    }
    Ok((i, j))
}

/// `C_k = chi_jk / chi_ij` for pivot `(i, j)` and `k` outside the pivot.
pub fn casimir(spec: &FamilySpec, k: usize, x: &[f64]) -> Result<f64, PoissonError> {
    let (i, j) = casimir_parts(spec, k, x)?;
    let pivot = spec.chi(i, j, x)?;
    if pivot == 0.0 {
        return Err(PoissonError::SingularPivot { point: x.to_vec() });
    }
    Ok(spec.chi(j, k, x)? / pivot)
}

/// All nontrivial Casimirs, in index order.
pub fn casimirs(spec: &FamilySpec, x: &[f64]) -> Result<Vec<f64>, PoissonError> {
    spec.casimir_indices()
        .into_iter()
        .map(|k| casimir(spec, k, x))
        .collect()
}

/// Closed-form gradient of `C_k`:
///
/// ```text
/// ∂_i C_k = psi_i' chi_kj / chi_ij^2
/// ∂_j C_k = psi_j' chi_ik / chi_ij^2
/// ∂_k C_k = psi_k' chi_ji / chi_ij^2
/// ```
///
/// with every other component exactly zero.
pub fn casimir_gradient(spec: &FamilySpec, k: usize, x: &[f64]) -> Result<Vec<f64>, PoissonError> {
    let (i, j) = casimir_parts(spec, k, x)?;
    let c_ij = spec.chi(i, j, x)?;
    if c_ij == 0.0 {
        return Err(PoissonError::SingularPivot { point: x.to_vec() });
    }
    let denom = c_ij * c_ij;
    let dpsi = |m: usize| spec.potential(m).psi_prime(x[m]);
    let mut grad = vec![0.0; spec.n()];
    grad[i] = dpsi(i)? * spec.chi(k, j, x)? / denom;
    grad[j] = dpsi(j)? * spec.chi(i, k, x)? / denom;
    grad[k] = dpsi(k)? * spec.chi(j, i, x)? / denom;
    Ok(grad)
}

/// The `(n-2) × n` matrix whose rows are the Casimir gradients.
pub fn casimir_gradient_matrix(spec: &FamilySpec, x: &[f64]) -> Result<DMatrix<f64>, PoissonError> {
    let idx = spec.casimir_indices();
    let mut m = DMatrix::zeros(idx.len(), spec.n());
    for (row, &k) in idx.iter().enumerate() {
        for (col, g) in casimir_gradient(spec, k, x)?.into_iter().enumerate() {
            m[(row, col)] = g;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelResidual {
    /// `‖J ∇C_k‖_∞`.
    pub value: f64,
    /// `(1 + max|J|) * (1 + max|∇C_k|)`.
    pub scale: f64,
}

impl KernelResidual {
    pub fn normalized(&self) -> f64 {
        self.value / self.scale
    }
}

pub fn kernel_residual(spec: &FamilySpec, k: usize, x: &[f64]) -> Result<KernelResidual, PoissonError> {
    let grad = casimir_gradient(spec, k, x)?;
    let j = eval_j(spec, x)?;
    let g = nalgebra::DVector::from_vec(grad);
    let value = (&j.matrix * &g).amax();
    Ok(KernelResidual {
        value,
        scale: (1.0 + j.max_abs()) * (1.0 + g.amax()),
    })
}

/// `chi_ri chi_kj + chi_rj chi_ik + chi_rk chi_ji`, which vanishes
/// identically for every family instance.
pub fn cyclic_chi_identity(
    spec: &FamilySpec,
    r: usize,
    i: usize,
    j: usize,
    k: usize,
    x: &[f64],
) -> Result<f64, EvalError> {
    let c = |a: usize, b: usize| spec.chi(a, b, x);
    Ok(c(r, i)? * c(k, j)? + c(r, j)? * c(i, k)? + c(r, k)? * c(j, i)?)
}
