//! The global Darboux chart of a family instance.
//!
//! With pivot `(i, j)` the chart keeps `y_i = x_i`, `y_j = x_j` and replaces
//! every other coordinate by its Casimir, `y_k = C_k(x) = chi_jk / chi_ij`.
//! The inverse is explicit up to the one-dimensional inverses `zeta_k` of
//! the potentials:
//!
//! ```text
//! x_k = zeta_k(psi_j(y_j) + kappa_jk - y_k * chi_ij(y_i, y_j))
//! ```
//!
//! In chart coordinates the structure matrix becomes `J_ij(x) B ⊕ 0` with
//! `B = [[0, 1], [-1, 0]]` sitting at the pivot positions, so after the time
//! change `dτ = J_ij dt` it is canonical.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::exprlang::EvalError;
use crate::family::{inverse_potential, FamilyError, FamilySpec};
use crate::poisson::{self, PoissonError};
use crate::sampling;

/// Entrywise tolerance of the normalized pushforward against `B ⊕ 0`.
pub const CANONICAL_TOLERANCE: f64 = 1e-8;
/// Sup-norm tolerance for `inverse(forward(x)) = x`.
pub const ROUND_TRIP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DarbouxError {
    #[error("coordinate {k} leaves the chart: argument {argument} outside [{lo}, {hi}]")]
    OutOfChart {
        k: usize,
        argument: f64,
        lo: f64,
        hi: f64,
    },
    #[error("pivot entry of J vanishes at the domain center")]
    ZeroPivotEntry,
    #[error("canonical form deviates by {deviation:e} at {witness:?}")]
    Certificate {
        deviation: f64,
        witness: Vec<f64>,
        report: Box<CanonicalReport>,
    },
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Chart `y(x)` of a validated instance.
#[derive(Debug, Clone, Copy)]
pub struct DarbouxChart<'a> {
    spec: &'a FamilySpec,
    pivot: (usize, usize),
    pivot_sign: f64,
}

impl<'a> DarbouxChart<'a> {
    /// The sign of `J_ij` is read at the domain center; validation
    /// guarantees it is the same everywhere.
    pub fn new(spec: &'a FamilySpec) -> Result<Self, DarbouxError> {
        let pivot = spec.pivot();
        let center = spec.domain().center();
        let j = poisson::eval_j(spec, &center)?;
        let entry = j.get(pivot.0, pivot.1);
        if entry == 0.0 || !entry.is_finite() {
            return Err(DarbouxError::ZeroPivotEntry);
        }
        Ok(DarbouxChart {
            spec,
            pivot,
            pivot_sign: entry.signum(),
        })
    }

    pub fn spec(&self) -> &'a FamilySpec {
        self.spec
    }

    pub fn pivot(&self) -> (usize, usize) {
        self.pivot
    }

    /// Sign of `J_ij` on the domain; also the direction of `τ`.
    pub fn pivot_sign(&self) -> f64 {
        self.pivot_sign
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, DarbouxError> {
        let mut y = x.to_vec();
        for k in self.spec.casimir_indices() {
            y[k] = poisson::casimir(self.spec, k, x)?;
        }
        Ok(y)
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>, DarbouxError> {
        let spec = self.spec;
        if y.len() != spec.n() {
            return Err(EvalError::PointLength {
                expected: spec.n(),
                got: y.len(),
            }
            .into());
        }
        let (i, j) = self.pivot;
        for p in [i, j] {
            let (lo, hi) = spec.potential(p).interval();
            if !(y[p] >= lo && y[p] <= hi) {
                return Err(DarbouxError::OutOfChart {
                    k: p + 1,
                    argument: y[p],
                    lo,
                    hi,
                });
            }
        }
        let psi_j = spec.potential(j).psi(y[j])?;
        let chi_ij = spec.chi(i, j, y)?;
        let mut x = y.to_vec();
        for k in spec.casimir_indices() {
            let argument = psi_j + spec.kappa().kappa(j, k) - y[k] * chi_ij;
            let p = spec.potential(k);
            x[k] = inverse_potential(p, argument).map_err(|e| match e {
                FamilyError::OutOfRange { lo, hi, .. } => DarbouxError::OutOfChart {
                    k: k + 1,
                    argument,
                    lo,
                    hi,
                },
                FamilyError::Eval(e) => DarbouxError::Eval(e),
                other => unreachable!("{other}"),
            })?;
        }
        Ok(x)
    }

    /// `∂y/∂x`: unit rows at the pivot, Casimir gradients elsewhere.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, DarbouxError> {
        let n = self.spec.n();
        let mut d = DMatrix::zeros(n, n);
        d[(self.pivot.0, self.pivot.0)] = 1.0;
        d[(self.pivot.1, self.pivot.1)] = 1.0;
        for k in self.spec.casimir_indices() {
            for (col, g) in poisson::casimir_gradient(self.spec, k, x)?.into_iter().enumerate() {
                d[(k, col)] = g;
            }
        }
        Ok(d)
    }

    /// `(∂y/∂x) J(x) (∂y/∂x)^T`, the structure matrix in chart coordinates.
    pub fn pushforward_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>, DarbouxError> {
        let d = self.jacobian(x)?;
        let j = poisson::eval_j(self.spec, x)?;
        let p = &d * &j.matrix * d.transpose();
        // restore exact skew-symmetry lost to rounding in the triple product
        Ok((&p - p.transpose()) * 0.5)
    }

    /// `B ⊕ 0` with `B` at the pivot positions.
    pub fn canonical_block(&self) -> DMatrix<f64> {
        let n = self.spec.n();
        let mut b = DMatrix::zeros(n, n);
        b[(self.pivot.0, self.pivot.1)] = 1.0;
        b[(self.pivot.1, self.pivot.0)] = -1.0;
        b
    }

    /// `J_ij(x(y)) = eta(x(y)) phi_i(y_i) phi_j(y_j) chi_ij(y_i, y_j)`,
    /// evaluated through the inverse chart.
    pub fn pivot_entry_via_chart(&self, y: &[f64]) -> Result<f64, DarbouxError> {
        let x = self.inverse(y)?;
        let (i, j) = self.pivot;
        let eta = self.spec.eta().eval(&x)?;
        let phi_i = self.spec.potential(i).phi(y[i])?;
        let phi_j = self.spec.potential(j).phi(y[j])?;
        Ok(eta * phi_i * phi_j * self.spec.chi(i, j, y)?)
    }

    /// Samples the domain and checks that the pushforward divided by the
    /// pivot entry is `B ⊕ 0`, that the chart round trip closes and that
    /// the chart Jacobian is invertible.
    pub fn canonical_certificate(&self, samples: usize, seed: u64) -> Result<CanonicalReport, DarbouxError> {
        let domain = self.spec.domain();
        let points = sampling::box_points(&domain.lower, &domain.upper, samples.max(1), seed);
        let block = self.canonical_block();
        let (pi, pj) = self.pivot;

        let per_point: Vec<Result<PointCheck, DarbouxError>> = points
            .par_iter()
            .map(|x| {
                let p = self.pushforward_matrix(x)?;
                let entry = poisson::eval_j(self.spec, x)?.get(pi, pj);
                let deviation = (p / entry - &block).amax();
                let y = self.forward(x)?;
                let back = self.inverse(&y)?;
                let round_trip = back
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let via_chart = self.pivot_entry_via_chart(&y)?;
                let path_gap = ((via_chart - entry) / entry).abs();
                let det = self.jacobian(x)?.determinant().abs();
                Ok(PointCheck {
                    deviation,
                    round_trip,
                    path_gap,
                    det,
                })
            })
            .collect();

        let mut report = CanonicalReport {
            samples: points.len(),
            seed,
            pivot: (pi + 1, pj + 1),
            pivot_sign: self.pivot_sign,
            casimir_coordinates: self.spec.n() - 2,
            max_deviation: 0.0,
            witness: points[0].clone(),
            max_round_trip: 0.0,
            round_trip_witness: points[0].clone(),
            max_pivot_path_gap: 0.0,
            min_abs_det: f64::INFINITY,
        };
        for (check, x) in per_point.into_iter().zip(&points) {
            let c = check?;
            if c.deviation > report.max_deviation || c.deviation.is_nan() {
                report.max_deviation = c.deviation;
                report.witness = x.clone();
            }
            if c.round_trip > report.max_round_trip {
                report.max_round_trip = c.round_trip;
                report.round_trip_witness = x.clone();
            }
            report.max_pivot_path_gap = report.max_pivot_path_gap.max(c.path_gap);
            report.min_abs_det = report.min_abs_det.min(c.det);
        }
        if report.max_deviation.is_nan() || report.max_deviation > CANONICAL_TOLERANCE {
            return Err(DarbouxError::Certificate {
                deviation: report.max_deviation,
                witness: report.witness.clone(),
                report: Box::new(report),
            });
        }
        if report.max_round_trip.is_nan() || report.max_round_trip > ROUND_TRIP_TOLERANCE {
            return Err(DarbouxError::Certificate {
                deviation: report.max_round_trip,
                witness: report.round_trip_witness.clone(),
                report: Box::new(report),
            });
        }
        Ok(report)
    }
}

struct PointCheck {
    deviation: f64,
    round_trip: f64,
    path_gap: f64,
    det: f64,
}

/// Result of [`DarbouxChart::canonical_certificate`]. Indices are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalReport {
    pub samples: usize,
    pub seed: u64,
    pub pivot: (usize, usize),
    pub pivot_sign: f64,
    pub casimir_coordinates: usize,
    pub max_deviation: f64,
    pub witness: Vec<f64>,
    pub max_round_trip: f64,
    pub round_trip_witness: Vec<f64>,
    /// Largest relative gap between `J_ij(x)` and the same entry computed
    /// through the inverse chart.
    pub max_pivot_path_gap: f64,
    pub min_abs_det: f64,
}
