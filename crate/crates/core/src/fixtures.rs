//! Seeded random family instances for sweeps and property tests.
//!
//! Potentials are drawn from `x`, `x^2` on a positive interval, `exp(x)`,
//! `log(x)` on a positive interval and `x + sin(x)/2`, each with a random
//! nonzero coefficient. `eta` is a trig/polynomial mix bounded away from
//! zero, and the generator λ is random except for the pivot entry, which
//! is placed so that the pivot χ keeps one sign on the box.

use rand::Rng;

use crate::exprlang::{Context, Expr};
use crate::family::{FamilySpec, KappaSpec, UnivariatePotential};

const KINDS: [&str; 5] = ["x", "x^2", "exp(x)", "log(x)", "x + sin(x)/2"];

fn interval(rng: &mut impl Rng, kind: usize) -> (f64, f64) {
    let lo = match kind {
        1 | 3 => rng.gen_range(0.5..2.0),
        2 => rng.gen_range(-1.0..1.0),
        _ => rng.gen_range(-2.0..2.0),
    };
    (lo, lo + rng.gen_range(0.5..1.5))
}

fn potential(rng: &mut impl Rng) -> UnivariatePotential {
    let kind = rng.gen_range(0..KINDS.len());
    let coeff = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let src = format!("{coeff}*({})", KINDS[kind]);
    let (lo, hi) = interval(rng, kind);
    let psi = Expr::parse(&src, Context::Univariate).expect("fixture grammar");
    UnivariatePotential::from_psi(psi, lo, hi).expect("fixture interval")
}

fn eta(rng: &mut impl Rng, n: usize) -> Expr {
    let mut var = || rng.gen_range(1..=n);
    let (p, q, r, m) = (var(), var(), var(), var());
    let a0 = rng.gen_range(1.5..3.0);
    let a1 = rng.gen_range(-0.5..0.5);
    let a2 = rng.gen_range(-0.5..0.5);
    let a3 = rng.gen_range(0.0..0.3);
    let sign = if rng.gen_bool(0.5) { "" } else { "-" };
    let src = format!(
        "{sign}({a0} + {a1}*sin(x{p}*x{q}) + {a2}*cos(x{r}) + {a3}*x{m}^2)"
    );
    Expr::parse(&src, Context::Multivariate(n)).expect("fixture grammar")
}

fn hamiltonian(rng: &mut impl Rng, n: usize) -> Expr {
    let terms: Vec<String> = (1..=n)
        .map(|k| format!("{}*x{k}^2", rng.gen_range(0.2..1.0)))
        .collect();
    let p = rng.gen_range(1..=n);
    let src = format!("{} + {}*sin(x{p})", terms.join(" + "), rng.gen_range(-0.3..0.3));
    Expr::parse(&src, Context::Multivariate(n)).expect("fixture grammar")
}

/// Random instance of dimension 3..=6 with a random pivot.
pub fn random_family(rng: &mut impl Rng) -> FamilySpec {
    let n = rng.gen_range(3..=6);
    random_family_with_dim(rng, n)
}

pub fn random_family_with_dim(rng: &mut impl Rng, n: usize) -> FamilySpec {
    let potentials: Vec<_> = (0..n).map(|_| potential(rng)).collect();
    let i = rng.gen_range(0..n);
    let j = (i + rng.gen_range(1..n)) % n;
    let mut lambda: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (ai, bi) = potentials[i].image();
    let (aj, bj) = potentials[j].image();
    let gap = rng.gen_range(0.2..1.0);
    // shift psi_j + λ_j fully above or below psi_i + λ_i
    lambda[j] = if rng.gen_bool(0.5) {
        bi + lambda[i] - aj + gap
    } else {
        ai + lambda[i] - bj - gap
    };
    let eta = eta(rng, n);
    let h = hamiltonian(rng, n);
    FamilySpec::new(potentials, eta, KappaSpec::from_lambda(lambda), (i, j))
        .expect("fixture is structurally valid")
        .with_hamiltonian(h)
        .expect("fixture hamiltonian")
}

/// Uniform random point of the instance's domain box.
pub fn random_point(rng: &mut impl Rng, spec: &FamilySpec) -> Vec<f64> {
    let d = spec.domain();
    d.lower
        .iter()
        .zip(&d.upper)
        .map(|(lo, hi)| rng.gen_range(*lo..=*hi))
        .collect()
}
