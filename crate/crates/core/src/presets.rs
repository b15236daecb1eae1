//! Built-in instances: the linear family `J_ij = η (x_i - x_j)` (with the
//! Halphen and circle-map factors as special cases) and the n-dimensional
//! Euler top.
//!
//! The Euler top `J_ij = η (α_j x_i² - α_i x_j²) ∏_{k≠i,j} x_k` is stored in
//! family form, `ψ_k = x²/α_k`, `κ = 0`, `η_family = 4 η ∏_k x_k`, so that
//! the chart and integrators need no special case.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::exprlang::{Context, Expr};
use crate::family::{DomainBox, FamilyError, FamilySpec, KappaSpec, UnivariatePotential};

pub const HALPHEN_ETA: &str = "1/(2*(x1-x2)*(x2-x3)*(x3-x1))";
pub const CIRCLE_MAPS_ETA: &str = "-1/((x1-x2)*(x2-x3)*(x3-x1))";
pub const EULER_TOP_ALPHA: [f64; 3] = [1.0, 2.0, 3.0];
/// Default Euler-top Hamiltonian, `H = Σ x_k²`.
pub const EULER_TOP_HAMILTONIAN: &str = "x1^2 + x2^2 + x3^2";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PresetError {
    #[error("unknown preset '{0}' (expected example1, halphen, circle-maps or euler-top)")]
    UnknownName(String),
    #[error("dimension must be at least {min}, got {n}")]
    Dimension { n: usize, min: usize },
    #[error("box has {got} coordinates, expected {expected}")]
    BoxLength { expected: usize, got: usize },
    #[error("alpha_{k} must be nonzero and finite")]
    ZeroAlpha { k: usize },
    #[error("box touches the coordinate plane x{k} = 0")]
    CoordinatePlane { k: usize },
    #[error("x1 - x2 changes sign on the box")]
    PivotCrossing,
    #[error(transparent)]
    Family(#[from] FamilyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetId {
    Example1,
    Halphen,
    CircleMaps,
    EulerTop,
}

impl PresetId {
    pub const ALL: [PresetId; 4] = [
        PresetId::Example1,
        PresetId::Halphen,
        PresetId::CircleMaps,
        PresetId::EulerTop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PresetId::Example1 => "example1",
            PresetId::Halphen => "halphen",
            PresetId::CircleMaps => "circle-maps",
            PresetId::EulerTop => "euler-top",
        }
    }

    /// The preset on its default box. Only the Euler top carries a
    /// Hamiltonian.
    pub fn build(self) -> FamilySpec {
        match self {
            PresetId::Example1 => build_example1(3, None, None),
            PresetId::Halphen => build_halphen(),
            PresetId::CircleMaps => build_circle_maps(),
            PresetId::EulerTop => return euler_top_default(),
        }
        .expect("default preset boxes are valid")
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetId {
    type Err = PresetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PresetId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| PresetError::UnknownName(s.to_string()))
    }
}

/// `[2k-1, 2k]` in coordinate `k`, so all `x_i - x_j` keep one sign.
pub fn example1_box(n: usize) -> DomainBox {
    DomainBox {
        lower: (1..=n).map(|k| (2 * k - 1) as f64).collect(),
        upper: (1..=n).map(|k| (2 * k) as f64).collect(),
    }
}

fn check_box(n: usize, domain: &DomainBox) -> Result<(), PresetError> {
    for got in [domain.lower.len(), domain.upper.len()] {
        if got != n {
            return Err(PresetError::BoxLength { expected: n, got });
        }
    }
    Ok(())
}

fn potentials(src: impl Fn(usize) -> String, domain: &DomainBox) -> Result<Vec<UnivariatePotential>, PresetError> {
    (0..domain.lower.len())
        .map(|k| {
            let psi = Expr::parse(&src(k), Context::Univariate).expect("preset grammar");
            Ok(UnivariatePotential::from_psi(psi, domain.lower[k], domain.upper[k])?)
        })
        .collect()
}

/// `ψ_k(x) = x`, `κ = 0`, pivot (1, 2). `eta` defaults to the constant 1.
pub fn build_example1(n: usize, eta: Option<Expr>, domain: Option<DomainBox>) -> Result<FamilySpec, PresetError> {
    if n < 2 {
        return Err(PresetError::Dimension { n, min: 2 });
    }
    let domain = domain.unwrap_or_else(|| example1_box(n));
    check_box(n, &domain)?;
    // x1 - x2 keeps one sign iff the two intervals are disjoint
    if !(domain.upper[0] < domain.lower[1] || domain.upper[1] < domain.lower[0]) {
        return Err(PresetError::PivotCrossing);
    }
    let eta = eta.unwrap_or_else(|| Expr::constant(1.0, Context::Multivariate(n)));
    let pots = potentials(|_| "x".to_string(), &domain)?;
    Ok(FamilySpec::new(pots, eta, KappaSpec::zero(n), (0, 1))?)
}

pub fn build_halphen() -> Result<FamilySpec, PresetError> {
    let eta = Expr::parse(HALPHEN_ETA, Context::Multivariate(3)).expect("preset grammar");
    build_example1(3, Some(eta), None)
}

pub fn build_circle_maps() -> Result<FamilySpec, PresetError> {
    let eta = Expr::parse(CIRCLE_MAPS_ETA, Context::Multivariate(3)).expect("preset grammar");
    build_example1(3, Some(eta), None)
}

/// Default Euler-top box. `x1 ∈ [0.85, 1.75]` and the upper end of `x2` is
/// kept below `0.95 · 0.85 · sqrt(|α2/α1|)` so that `α2 x1² - α1 x2²`
/// never vanishes; the roles are swapped when `|α2| < |α1|`. The remaining
/// coordinates use `[0.5, 1.5]`.
pub fn euler_top_box(alpha: &[f64]) -> DomainBox {
    let n = alpha.len();
    let mut lower = vec![0.5; n];
    let mut upper = vec![1.5; n];
    lower[0] = 0.85;
    upper[0] = 1.75;
    lower[1] = 0.5;
    upper[1] = 1.5;
    if alpha[0] * alpha[1] > 0.0 {
        let r = (alpha[1] / alpha[0]).abs().sqrt();
        if r >= 1.0 {
            upper[1] = (0.95 * 0.85 * r).min(1.5);
        } else {
            (lower[0], upper[0]) = (0.5, (0.95 * 0.85 / r).min(1.5));
            (lower[1], upper[1]) = (0.85, 1.75);
        }
    }
    DomainBox { lower, upper }
}

/// Euler top in family form. `eta` defaults to 1 and `domain` to
/// [`euler_top_box`]. The box may lie on either side of each coordinate
/// plane but must not touch it.
pub fn build_euler_top(
    alpha: &[f64],
    eta: Option<Expr>,
    domain: Option<DomainBox>,
) -> Result<FamilySpec, PresetError> {
    let n = alpha.len();
    if n < 2 {
        return Err(PresetError::Dimension { n, min: 2 });
    }
    if let Some(k) = alpha.iter().position(|a| *a == 0.0 || !a.is_finite()) {
        return Err(PresetError::ZeroAlpha { k: k + 1 });
    }
    let domain = domain.unwrap_or_else(|| euler_top_box(alpha));
    check_box(n, &domain)?;
    for k in 0..n {
        if !(domain.lower[k] > 0.0 || domain.upper[k] < 0.0) {
            return Err(PresetError::CoordinatePlane { k: k + 1 });
        }
    }
    let eta_src = match eta {
        Some(e) => format!("({e})*"),
        None => String::new(),
    };
    let product: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    let family_eta = Expr::parse(
        &format!("4*{eta_src}{}", product.join("*")),
        Context::Multivariate(n),
    )
    .expect("preset grammar");
    let pots = potentials(|k| format!("x^2/{}", fmt_const(alpha[k])), &domain)?;
    Ok(FamilySpec::new(pots, family_eta, KappaSpec::zero(n), (0, 1))?)
}

fn fmt_const(a: f64) -> String {
    if a < 0.0 {
        format!("({a:e})")
    } else {
        format!("{a:e}")
    }
}

/// α = (1, 2, 3), η = 1, `H = x1² + x2² + x3²` on the default box.
pub fn euler_top_default() -> FamilySpec {
    let h = Expr::parse(EULER_TOP_HAMILTONIAN, Context::Multivariate(3)).expect("preset grammar");
    build_euler_top(&EULER_TOP_ALPHA, None, None)
        .and_then(|s| Ok(s.with_hamiltonian(h)?))
        .expect("default preset box is valid")
}
