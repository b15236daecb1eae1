//! Construction, certification, Darboux reduction and integration of the
//! separable rank-two Poisson structures
//!
//! ```text
//! J_ij(x) = eta(x) * phi_i(x_i) * phi_j(x_j) * (psi_i(x_i) - psi_j(x_j) + kappa_ij),
//! ```
//!
//! with `phi_k = 1/psi_k'` and `kappa_ij = lambda_i - lambda_j`.
//!
//! * [`exprlang`] parses and differentiates the scalar functions.
//! * [`family`] holds an instance and certifies its hypotheses.
//! * [`poisson`] evaluates `J`, Jacobi residuals, ranks and Casimirs.
//! * [`darboux`] builds the global canonical chart.
//! * [`dynamics`] integrates the direct and reduced flows.
//! * [`presets`] reproduces the linear and triaxial-top instances.

pub mod darboux;
pub mod dynamics;
pub mod exprlang;
pub mod family;
pub mod fixtures;
pub mod poisson;
pub mod presets;
pub mod sampling;
