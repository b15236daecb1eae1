//! File form of a family instance. Indices are 1-based here and only here.

use std::path::Path;

use poisson_kit::exprlang::{Context, Expr};
use poisson_kit::family::{kappa_from_matrix, FamilySpec, KappaSpec, UnivariatePotential};
use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<String>>,
    pub eta: String,
    pub kappa: KappaConfig,
    pub domain: DomainConfig,
    #[serde(default = "default_pivot")]
    pub pivot: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaConfig {
    Lambda(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn default_pivot() -> [usize; 2] {
    [1, 2]
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn check_len(what: &str, got: usize, n: usize) -> Result<(), CliError> {
    if got != n {
        return Err(usage(format!("{what} has {got} entries, expected n = {n}")));
    }
    Ok(())
}

fn parse(what: &str, src: &str, ctx: Context) -> Result<Expr, CliError> {
    Expr::parse(src, ctx).map_err(|e| usage(format!("{what}: {e} in `{src}`")))
}

impl FamilyConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Usage(m) => usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| usage(format!("invalid config: {e}")))
    }

    pub fn to_json(&self) -> String {
        canonical::to_string(&serde_json::to_value(self).expect("config serializes"))
    }

    /// Schema checks, then construction. Nothing numeric beyond evaluating
    /// the potentials at the interval ends happens here.
    pub fn to_spec(&self) -> Result<FamilySpec, CliError> {
        let n = self.n;
        if n < 2 {
            return Err(usage(format!("n must be at least 2, got {n}")));
        }
        check_len("domain.lower", self.domain.lower.len(), n)?;
        check_len("domain.upper", self.domain.upper.len(), n)?;
        let (sources, from_phi) = match (&self.psi, &self.phi) {
            (Some(psi), None) => (psi, false),
            (None, Some(phi)) => (phi, true),
            _ => return Err(usage("exactly one of `psi` and `phi` must be given")),
        };
        let label = if from_phi { "phi" } else { "psi" };
        check_len(label, sources.len(), n)?;
        let [pi, pj] = self.pivot;
        if pi == pj || !(1..=n).contains(&pi) || !(1..=n).contains(&pj) {
            return Err(usage(format!(
                "pivot [{pi}, {pj}] must be two distinct indices in 1..={n}"
            )));
        }
        let kappa = match &self.kappa {
            KappaConfig::Lambda(l) => {
                check_len("kappa.lambda", l.len(), n)?;
                KappaSpec::from_lambda(l.clone())
            }
            KappaConfig::Matrix(m) => {
                check_len("kappa.matrix", m.len(), n)?;
                for (r, row) in m.iter().enumerate() {
                    check_len(&format!("kappa.matrix row {}", r + 1), row.len(), n)?;
                }
                kappa_from_matrix(m).map_err(|e| usage(e.to_string()))?
            }
        };

        let mut potentials = Vec::with_capacity(n);
        for (k, src) in sources.iter().enumerate() {
            let what = format!("{label}[{}]", k + 1);
            let e = parse(&what, src, Context::Univariate)?;
            let (lo, hi) = (self.domain.lower[k], self.domain.upper[k]);
            let p = if from_phi {
                UnivariatePotential::from_phi(e, lo, hi)
            } else {
                UnivariatePotential::from_psi(e, lo, hi)
            };
            potentials.push(p.map_err(|e| usage(format!("{what}: {e}")))?);
        }
        let eta = parse("eta", &self.eta, Context::Multivariate(n))?;
        let mut spec = FamilySpec::new(potentials, eta, kappa, (pi - 1, pj - 1))
            .map_err(|e| usage(e.to_string()))?;
        if let Some(h) = &self.hamiltonian {
            let h = parse("hamiltonian", h, Context::Multivariate(n))?;
            spec = spec.with_hamiltonian(h).map_err(|e| usage(e.to_string()))?;
        }
        Ok(spec)
    }

    /// Config for an existing instance; κ is written as its generator.
    pub fn from_spec(spec: &FamilySpec) -> Self {
        let n = spec.n();
        let pots = spec.potentials();
        let quadrature = pots.iter().any(|p| p.is_quadrature());
        let sources: Vec<String> = pots
            .iter()
            .map(|p| {
                let e = if quadrature { p.phi_expr() } else { p.psi_expr() };
                e.expect("potentials of one instance share a form").to_string()
            })
            .collect();
        let domain = spec.domain();
        let (i, j) = spec.pivot();
        FamilyConfig {
            n,
            psi: (!quadrature).then(|| sources.clone()),
            phi: quadrature.then_some(sources),
            eta: spec.eta().to_string(),
            kappa: KappaConfig::Lambda(spec.kappa().lambda().to_vec()),
            domain: DomainConfig {
                lower: domain.lower,
                upper: domain.upper,
            },
            pivot: [i + 1, j + 1],
            hamiltonian: spec.hamiltonian().map(|h| h.expr.to_string()),
        }
    }
}
