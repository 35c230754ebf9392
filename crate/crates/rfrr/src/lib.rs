//! Random feature ridge regression on the sphere: exact high-dimensional
//! asymptotics and the finite-size Monte Carlo machinery to verify them.
//!
//! The library is organized bottom-up:
//!
//! * [`linalg`] — a minimal column-major matrix plus safe wrappers over the
//!   system BLAS/LAPACK routines everything else uses.
//! * [`special`] — Gegenbauer and Hermite evaluation, spherical-harmonic
//!   subspace dimensions, Gaussian quadrature rules, sphere sampling.
//! * [`spectral`] — activation / target models and their expansions into
//!   Gegenbauer (finite `d`) and Hermite (`d -> inf`) coefficients, plus the
//!   level scalars (`mu_ell`, `mu_{>ell}^2`, `zeta`, `lambda_bar`) that feed
//!   the asymptotic formulas.
//! * [`fixed_point`] — the coupled self-consistent equations of the critical
//!   regime: a damped complex iteration, a Newton refinement, closed forms
//!   for the off-critical regimes, and the singular value density.
//! * [`theory`] — regime classification and the assembled risk predictions
//!   (test/train error, estimator norm, bias/variance, GCV limit).
//! * [`simulate`] — finite-size experiments: dataset generation, ridge fits,
//!   closed-form population risk, kernel regression, Gaussian equivalents,
//!   seeded multi-trial running.
//! * [`experiments`] — named experiment presets, sweep execution, CSV/JSON
//!   output for the figure-reproduction pipelines.

pub mod error;
pub mod experiments;
pub mod fixed_point;
pub mod linalg;
pub mod simulate;
pub mod special;
pub mod spectral;
pub mod theory;

pub use error::{Error, Result};
