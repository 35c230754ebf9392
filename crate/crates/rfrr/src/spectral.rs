//! Activation and target models and their harmonic decompositions.
//!
//! A scalar function `sigma` on the sphere's single-coordinate marginal
//! `tau_{d,1}` decomposes as `sigma(t) = sum_k s_k q_k(t)` in the
//! orthonormal Gegenbauer family of [`crate::special`]; as `d -> inf` the
//! same function has a Hermite expansion `sigma(g) = sum_k m_k he_k(g)`
//! under the standard normal.  Both coefficient sequences, the exact
//! squared norms, and the level scalars derived from them
//! (`mu_ell`, `mu_{>ell}^2`, `zeta`, `lambda_bar`) feed every asymptotic
//! prediction downstream.

use crate::error::{Error, Result};
use crate::special::{
    gauss_gegenbauer, gauss_hermite, hermite_eval, tau_d1_half_moment, GegenbauerBasis,
    MAX_DEGREE,
};
use serde::{Deserialize, Serialize};

/// Default quadrature resolution; doubled until projections stabilize.
pub const DEFAULT_QUAD_NODES: usize = 256;
const MAX_QUAD_NODES: usize = 4096;
/// Node doubling must move coefficients by no more than this to accept.
const QUAD_ACCEPT: f64 = 1e-10;
/// ... and a residual drift beyond this is an accuracy failure.
const QUAD_FAIL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Function specifications
// ---------------------------------------------------------------------------

/// How a scalar function (activation or target link) is specified in
/// configs.  Serialized externally tagged, e.g.
/// `{"gegenbauer": [[1, 1.0], [2, 0.5]]}`, `{"monomial": [0, 1.5, 3, 2]}`,
/// `{"named": "relu"}` / `{"named": "shifted_relu(0.3)"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionSpec {
    /// Pairs `(k, coefficient)` in the orthonormal Gegenbauer family of
    /// the ambient dimension (the coefficients transfer verbatim to the
    /// Hermite family in the wide limit).
    Gegenbauer(Vec<(usize, f64)>),
    /// Polynomial coefficients in powers `t^0, t^1, ...`.
    Monomial(Vec<f64>),
    /// A named nonlinearity: `relu` or `shifted_relu(c)` = max(0, t) - c.
    Named(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NamedFunction {
    /// `max(0, t) - shift`.
    Relu { shift: f64 },
}

fn parse_named(s: &str) -> Result<NamedFunction> {
    let s = s.trim();
    if s == "relu" {
        return Ok(NamedFunction::Relu { shift: 0.0 });
    }
    if let Some(rest) = s.strip_prefix("shifted_relu(") {
        if let Some(arg) = rest.strip_suffix(')') {
            let shift: f64 = arg.trim().parse().map_err(|_| {
                Error::Config(format!("cannot parse shift in named function '{s}'"))
            })?;
            if !shift.is_finite() {
                return Err(Error::Config(format!("non-finite shift in '{s}'")));
            }
            return Ok(NamedFunction::Relu { shift });
        }
    }
    Err(Error::Config(format!(
        "unknown named function '{s}' (expected 'relu' or 'shifted_relu(c)')"
    )))
}

impl FunctionSpec {
    /// Degree at which the materialized expansion is truncated.  Finite
    /// specifications report their exact degree; named nonlinearities use
    /// the crate-wide cap (their norms stay exact, see
    /// [`FunctionModel::norm_sq`]).
    pub fn truncation_degree(&self) -> Result<usize> {
        match self {
            FunctionSpec::Gegenbauer(pairs) => {
                let k = pairs.iter().map(|&(k, _)| k).max().unwrap_or(0);
                if k > MAX_DEGREE {
                    return Err(Error::InvalidParameter(format!(
                        "Gegenbauer term of degree {k} exceeds the cap {MAX_DEGREE}"
                    )));
                }
                Ok(k)
            }
            FunctionSpec::Monomial(coeffs) => {
                let deg = coeffs
                    .iter()
                    .rposition(|&c| c != 0.0)
                    .unwrap_or(0);
                if deg > MAX_DEGREE {
                    return Err(Error::InvalidParameter(format!(
                        "monomial of degree {deg} exceeds the cap {MAX_DEGREE}"
                    )));
                }
                Ok(deg)
            }
            FunctionSpec::Named(name) => {
                parse_named(name)?;
                Ok(MAX_DEGREE)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FunctionSpec::Gegenbauer(pairs) => {
                for &(_, c) in pairs {
                    if !c.is_finite() {
                        return Err(Error::InvalidParameter(
                            "non-finite Gegenbauer coefficient".into(),
                        ));
                    }
                }
                Ok(())
            }
            FunctionSpec::Monomial(coeffs) => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "non-finite monomial coefficient".into(),
                    ));
                }
                Ok(())
            }
            FunctionSpec::Named(name) => parse_named(name).map(|_| ()),
        }
    }
}

// ---------------------------------------------------------------------------
// Decomposed function model
// ---------------------------------------------------------------------------

/// A scalar function together with both of its orthonormal expansions and
/// exact squared norms.
#[derive(Debug, Clone)]
pub struct FunctionModel {
    d: usize,
    spec: FunctionSpec,
    named: Option<NamedFunction>,
    basis: GegenbauerBasis,
    /// Gegenbauer coefficients `s_k` at the ambient dimension, `k <= kmax`.
    gegenbauer: Vec<f64>,
    /// Hermite coefficients `m_k` (the `d -> inf` limit), `k <= kmax`.
    hermite: Vec<f64>,
    /// Exact `E[f(t)^2]` under `tau_{d,1}` (not the truncated sum).
    norm_sq: f64,
    /// Exact `E[f(g)^2]` under the standard normal.
    hermite_norm_sq: f64,
}

impl FunctionModel {
    pub fn from_spec(spec: &FunctionSpec, d: usize) -> Result<FunctionModel> {
        spec.validate()?;
        let kmax = spec.truncation_degree()?;
        let basis = GegenbauerBasis::new(d, kmax)?;
        let named = match spec {
            FunctionSpec::Named(name) => Some(parse_named(name)?),
            _ => None,
        };

        let (gegenbauer, norm_sq) = gegenbauer_coeffs(spec, d, kmax)?;
        let (hermite, hermite_norm_sq) = hermite_coeffs(spec, kmax)?;

        // Parseval sanity: truncated mass cannot exceed the exact norm.
        for (what, coeffs, norm) in [
            ("Gegenbauer", &gegenbauer, norm_sq),
            ("Hermite", &hermite, hermite_norm_sq),
        ] {
            let mass: f64 = coeffs.iter().map(|c| c * c).sum();
            let tol = 1e-12 * norm.max(1.0);
            if mass > norm + tol {
                return Err(Error::Accuracy(format!(
                    "{what} expansion violates Parseval: coefficient mass {mass} \
                     exceeds exact norm {norm}"
                )));
            }
        }

        Ok(FunctionModel {
            d,
            spec: spec.clone(),
            named,
            basis,
            gegenbauer,
            hermite,
            norm_sq,
            hermite_norm_sq,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn spec(&self) -> &FunctionSpec {
        &self.spec
    }

    pub fn basis(&self) -> &GegenbauerBasis {
        &self.basis
    }

    pub fn truncation_degree(&self) -> usize {
        self.gegenbauer.len() - 1
    }

    /// Gegenbauer coefficients `s_0 ..= s_kmax` at the ambient dimension.
    pub fn gegenbauer_coeffs(&self) -> &[f64] {
        &self.gegenbauer
    }

    /// Hermite coefficients `m_0 ..= m_kmax` (wide limit).
    pub fn hermite_coeffs(&self) -> &[f64] {
        &self.hermite
    }

    /// Exact squared norm under `tau_{d,1}`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// Exact squared norm under the standard normal.
    pub fn hermite_norm_sq(&self) -> f64 {
        self.hermite_norm_sq
    }

    /// Mass above the truncation degree (clamped at zero; exactly zero
    /// for polynomial and Gegenbauer specifications).
    pub fn truncation_tail_sq(&self) -> f64 {
        let mass: f64 = self.gegenbauer.iter().map(|c| c * c).sum();
        (self.norm_sq - mass).max(0.0)
    }

    /// Mass strictly above degree `k` under the given convention,
    /// computed from the exact norm and clamped at zero.
    pub fn tail_sq(&self, k: usize, convention: Convention) -> f64 {
        let (coeffs, norm) = match convention {
            Convention::FiniteD => (&self.gegenbauer, self.norm_sq),
            Convention::HermiteLimit => (&self.hermite, self.hermite_norm_sq),
        };
        let head: f64 = coeffs.iter().take(k + 1).map(|c| c * c).sum();
        (norm - head).max(0.0)
    }

    /// Evaluate the function itself.  Named nonlinearities apply their
    /// closed form; monomials evaluate by Horner; Gegenbauer
    /// specifications evaluate their (exact) series.
    pub fn apply(&self, t: f64) -> f64 {
        match (&self.named, &self.spec) {
            (Some(NamedFunction::Relu { shift }), _) => t.max(0.0) - shift,
            (None, FunctionSpec::Monomial(coeffs)) => {
                let mut acc = 0.0;
                for &c in coeffs.iter().rev() {
                    acc = acc * t + c;
                }
                acc
            }
            (None, _) => self.basis.eval_series_raw(&self.gegenbauer, t),
        }
    }
}

// ---------------------------------------------------------------------------
// Coefficient computation
// ---------------------------------------------------------------------------

/// Gegenbauer coefficients and the exact squared norm under `tau_{d,1}`.
///
/// * Gegenbauer specifications are already in the target basis.
/// * Polynomials project by Gauss quadrature (exact once the rule
///   integrates degree `deg + kmax`; the doubling check certifies it).
/// * `relu` evaluates `<relu, q_k> = sum_m a_m E[t^{m+1}; t > 0]` from the
///   monomial coefficients of `q_k` and exact half-range moments — no
///   quadrature touches the kink.  `E[relu^2] = E[t^2]/2 = 1/2` exactly.
pub fn gegenbauer_coeffs(spec: &FunctionSpec, d: usize, kmax: usize) -> Result<(Vec<f64>, f64)> {
    spec.validate()?;
    match spec {
        FunctionSpec::Gegenbauer(pairs) => {
            let mut coeffs = vec![0.0; kmax + 1];
            for &(k, c) in pairs {
                if k > kmax {
                    return Err(Error::InvalidParameter(format!(
                        "Gegenbauer degree {k} beyond truncation {kmax}"
                    )));
                }
                coeffs[k] += c;
            }
            let norm_sq = coeffs.iter().map(|c| c * c).sum();
            Ok((coeffs, norm_sq))
        }
        FunctionSpec::Monomial(poly) => {
            let basis = GegenbauerBasis::new(d, kmax)?;
            let eval = |t: f64| {
                let mut acc = 0.0;
                for &c in poly.iter().rev() {
                    acc = acc * t + c;
                }
                acc
            };
            let project = |n: usize| -> Result<(Vec<f64>, f64)> {
                let (nodes, weights) = gauss_gegenbauer(d, n)?;
                let mut coeffs = vec![0.0; kmax + 1];
                let mut norm = 0.0;
                for (&t, &w) in nodes.iter().zip(weights.iter()) {
                    let ft = eval(t);
                    norm += w * ft * ft;
                    let q = basis.eval_all(t)?;
                    for (ck, qk) in coeffs.iter_mut().zip(q.iter()) {
                        *ck += w * ft * qk;
                    }
                }
                Ok((coeffs, norm))
            };
            project_with_doubling(project, "Gegenbauer projection")
        }
        FunctionSpec::Named(name) => {
            let NamedFunction::Relu { shift } = parse_named(name)?;
            let basis = GegenbauerBasis::new(d, kmax)?;
            let mut coeffs = vec![0.0; kmax + 1];
            // Half-range moments M_j = E[t^j; t > 0] for j up to kmax + 1.
            let m: Vec<f64> = (0..=kmax + 1)
                .map(|j| tau_d1_half_moment(d, j))
                .collect::<Result<_>>()?;
            for (k, ck) in coeffs.iter_mut().enumerate() {
                let mono = basis.monomial_coefficients(k)?;
                *ck = mono
                    .iter()
                    .enumerate()
                    .map(|(p, &a)| a * m[p + 1])
                    .sum();
            }
            coeffs[0] -= shift;
            // E[(max(0,t) - c)^2] = 1/2 - 2 c M_1 + c^2 with E[t^2] = 1.
            let norm_sq = 0.5 - 2.0 * shift * m[1] + shift * shift;
            Ok((coeffs, norm_sq))
        }
    }
}

/// Hermite coefficients and the exact squared norm under the standard
/// normal — the `d -> inf` limit of [`gegenbauer_coeffs`].
///
/// * Gegenbauer specifications carry their coefficients over verbatim
///   (each `q_k` converges to `he_k`).
/// * Polynomials project by Gauss-Hermite quadrature with the same
///   doubling certificate.
/// * `relu` uses the closed form: `m_0 = 1/sqrt(2 pi)`, `m_1 = 1/2`,
///   vanishing odd coefficients beyond 1, and
///   `m_k = (-1)^{(k-2)/2} (k-3)!! / sqrt(2 pi k!)` for even `k >= 2`,
///   with `E[relu^2] = 1/2` exactly.
pub fn hermite_coeffs(spec: &FunctionSpec, kmax: usize) -> Result<(Vec<f64>, f64)> {
    spec.validate()?;
    match spec {
        FunctionSpec::Gegenbauer(pairs) => {
            let mut coeffs = vec![0.0; kmax + 1];
            for &(k, c) in pairs {
                if k > kmax {
                    return Err(Error::InvalidParameter(format!(
                        "Gegenbauer degree {k} beyond truncation {kmax}"
                    )));
                }
                coeffs[k] += c;
            }
            let norm_sq = coeffs.iter().map(|c| c * c).sum();
            Ok((coeffs, norm_sq))
        }
        FunctionSpec::Monomial(poly) => {
            let eval = |x: f64| {
                let mut acc = 0.0;
                for &c in poly.iter().rev() {
                    acc = acc * x + c;
                }
                acc
            };
            let project = |n: usize| -> Result<(Vec<f64>, f64)> {
                let (nodes, weights) = gauss_hermite(n)?;
                let mut coeffs = vec![0.0; kmax + 1];
                let mut norm = 0.0;
                for (&x, &w) in nodes.iter().zip(weights.iter()) {
                    let fx = eval(x);
                    norm += w * fx * fx;
                    for (k, ck) in coeffs.iter_mut().enumerate() {
                        *ck += w * fx * hermite_eval(k, x);
                    }
                }
                Ok((coeffs, norm))
            };
            project_with_doubling(project, "Hermite projection")
        }
        FunctionSpec::Named(name) => {
            let NamedFunction::Relu { shift } = parse_named(name)?;
            let mut coeffs = vec![0.0; kmax + 1];
            let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
            for (k, ck) in coeffs.iter_mut().enumerate() {
                *ck = match k {
                    0 => 1.0 / sqrt_2pi,
                    1 => 0.5,
                    _ if k % 2 == 1 => 0.0,
                    _ => {
                        // (-1)^{(k-2)/2} (k-3)!! / sqrt(2 pi k!)
                        let sign = if (k - 2) / 2 % 2 == 0 { 1.0 } else { -1.0 };
                        let mut dfact = 1.0; // (k-3)!!
                        let mut j = k as i64 - 3;
                        while j >= 2 {
                            dfact *= j as f64;
                            j -= 2;
                        }
                        let mut fact = 1.0;
                        for i in 1..=k {
                            fact *= i as f64;
                        }
                        sign * dfact / (2.0 * std::f64::consts::PI * fact).sqrt()
                    }
                };
            }
            coeffs[0] -= shift;
            let norm_sq = 0.5 - 2.0 * shift / sqrt_2pi + shift * shift;
            Ok((coeffs, norm_sq))
        }
    }
}

/// Run a quadrature projection at doubling resolutions until successive
/// rules agree to `QUAD_ACCEPT`; drift beyond `QUAD_FAIL` at the node cap
/// is an accuracy failure.
fn project_with_doubling(
    project: impl Fn(usize) -> Result<(Vec<f64>, f64)>,
    what: &str,
) -> Result<(Vec<f64>, f64)> {
    let mut n = DEFAULT_QUAD_NODES;
    let (mut coeffs, mut norm) = project(n)?;
    loop {
        let (next_coeffs, next_norm) = project(2 * n)?;
        let drift = coeffs
            .iter()
            .zip(next_coeffs.iter())
            .map(|(a, b)| (a - b).abs())
            .fold((norm - next_norm).abs(), f64::max);
        coeffs = next_coeffs;
        norm = next_norm;
        if drift <= QUAD_ACCEPT {
            return Ok((coeffs, norm));
        }
        n *= 2;
        if 2 * n > MAX_QUAD_NODES {
            if drift <= QUAD_FAIL {
                return Ok((coeffs, norm));
            }
            return Err(Error::Accuracy(format!(
                "{what} did not stabilize: node doubling at n = {n} still moves \
                 coefficients by {drift:.3e}"
            )));
        }
    }
}

// ---------------------------------------------------------------------------
// Activation, target, noise
// ---------------------------------------------------------------------------

/// Which expansion the asymptotic formulas read their scalars from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Gegenbauer coefficients at the ambient dimension.
    FiniteD,
    /// Hermite coefficients (the `d -> inf` limit).
    HermiteLimit,
}

impl Convention {
    /// Default choice for a specification: functions already given as a
    /// Gegenbauer series at dimension `d` read their scalars there; for
    /// everything else the wide-limit Hermite coefficients are the
    /// canonical parameters.  Experiment configs may override; outputs
    /// record which convention produced the theory numbers.
    pub fn default_for(spec: &FunctionSpec) -> Convention {
        match spec {
            FunctionSpec::Gegenbauer(_) => Convention::FiniteD,
            _ => Convention::HermiteLimit,
        }
    }
}

/// The feature nonlinearity.
#[derive(Debug, Clone)]
pub struct ActivationModel(pub FunctionModel);

impl ActivationModel {
    pub fn from_spec(spec: &FunctionSpec, d: usize) -> Result<ActivationModel> {
        Ok(ActivationModel(FunctionModel::from_spec(spec, d)?))
    }

    pub fn model(&self) -> &FunctionModel {
        &self.0
    }

    pub fn apply(&self, t: f64) -> f64 {
        self.0.apply(t)
    }
}

/// The target `f*(x) = sum_k b_k q_k(<beta, x>)` for a unit direction
/// `beta`.  The target is *defined* by its expansion: simulation and
/// closed-form risk always agree on what is being learned, even for
/// specifications whose raw nonlinearity has mass beyond the truncation.
///
/// The direction is optional here: experiments that exploit rotational
/// invariance draw a fresh `beta` per trial, while a fixed direction can
/// be pinned for deterministic single-instance work.
#[derive(Debug, Clone)]
pub struct TargetModel {
    model: FunctionModel,
    direction: Option<Vec<f64>>,
}

impl TargetModel {
    pub fn from_spec(spec: &FunctionSpec, d: usize) -> Result<TargetModel> {
        Ok(TargetModel {
            model: FunctionModel::from_spec(spec, d)?,
            direction: None,
        })
    }

    /// Pin the target direction; must be a unit vector of length `d`.
    pub fn with_direction(mut self, beta: Vec<f64>) -> Result<TargetModel> {
        if beta.len() != self.model.d() {
            return Err(Error::InvalidParameter(format!(
                "target direction has length {}, ambient dimension is {}",
                beta.len(),
                self.model.d()
            )));
        }
        let norm: f64 = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "target direction must be unit (|norm - 1| = {:.2e})",
                (norm - 1.0).abs()
            )));
        }
        self.direction = Some(beta);
        Ok(self)
    }

    pub fn direction(&self) -> Option<&[f64]> {
        self.direction.as_deref()
    }

    pub fn model(&self) -> &FunctionModel {
        &self.model
    }

    /// Coefficients `b_k` in the convention's basis.
    pub fn coeffs(&self, convention: Convention) -> &[f64] {
        match convention {
            Convention::FiniteD => self.model.gegenbauer_coeffs(),
            Convention::HermiteLimit => self.model.hermite_coeffs(),
        }
    }

    /// `f*` evaluated through its expansion (see type docs).
    pub fn eval_link(&self, t: f64) -> f64 {
        self.model
            .basis
            .eval_series_raw(&self.model.gegenbauer, t)
    }
}

/// Label noise: independent centered Gaussian with the given variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<NoiseModel> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be finite and nonnegative, got {variance}"
            )));
        }
        Ok(NoiseModel { variance })
    }
}

// ---------------------------------------------------------------------------
// Level scalars and target frequencies
// ---------------------------------------------------------------------------

/// The four scalars the asymptotic theory reads off the activation at a
/// resolved level `ell`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LevelScalars {
    /// Coefficient at the level, `mu_ell`.
    pub mu_ell: f64,
    /// Mass strictly above the level, `mu_{>ell}^2` (from the exact norm).
    pub mu_gt_sq: f64,
    /// `zeta = mu_ell / sqrt(mu_{>ell}^2)`.
    pub zeta: f64,
    /// `lambda_bar = lambda / mu_{>ell}^2`.
    pub lambda_bar: f64,
}

/// Extract `(mu_ell, mu_{>ell}^2, zeta, lambda_bar)` from an activation
/// at level `ell` under the given convention.  Errors if the activation
/// has no component at the level or no mass above it — the asymptotics
/// are undefined there.
pub fn derive_scalars(
    act: &ActivationModel,
    ell: usize,
    lambda: f64,
    convention: Convention,
) -> Result<LevelScalars> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ridge penalty must be positive and finite, got {lambda}"
        )));
    }
    let m = act.model();
    let (coeffs, norm_sq) = match convention {
        Convention::FiniteD => (m.gegenbauer_coeffs(), m.norm_sq()),
        Convention::HermiteLimit => (m.hermite_coeffs(), m.hermite_norm_sq()),
    };
    if ell > m.truncation_degree() {
        return Err(Error::InvalidParameter(format!(
            "level {ell} beyond the activation's truncation degree {}",
            m.truncation_degree()
        )));
    }
    let mu_ell = coeffs[ell];
    let scale = norm_sq.sqrt().max(1.0);
    if mu_ell.abs() <= 1e-12 * scale {
        return Err(Error::AssumptionViolation(format!(
            "activation has no level-{ell} component (mu_ell = {mu_ell:.3e}); \
             the level asymptotics are undefined"
        )));
    }
    let head: f64 = coeffs[..=ell].iter().map(|c| c * c).sum();
    let mu_gt_sq = norm_sq - head;
    if mu_gt_sq <= 1e-12 * norm_sq.max(1.0) {
        return Err(Error::AssumptionViolation(format!(
            "activation has no mass above level {ell} (mu_{{>ell}}^2 = {mu_gt_sq:.3e}); \
             the effective ridge is degenerate"
        )));
    }
    Ok(LevelScalars {
        mu_ell,
        mu_gt_sq,
        zeta: mu_ell / mu_gt_sq.sqrt(),
        lambda_bar: lambda / mu_gt_sq,
    })
}

/// Decomposition of the target around a level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetFrequencies {
    /// `|b_ell|`.
    pub f_ell: f64,
    /// `b_ell^2`.
    pub f_ell_sq: f64,
    /// Mass strictly above the level (from the exact norm).
    pub f_gt_sq: f64,
    /// Mass strictly below the level.
    pub f_lt_sq: f64,
    /// `staircase[k] = ||P_{>k} f*||^2` for `k = 0 ..= kmax`.
    pub staircase: Vec<f64>,
    /// Exact `||f*||^2`.
    pub norm_sq: f64,
}

/// Split the target's mass at level `ell` and tabulate the staircase of
/// tail masses `||P_{>k} f*||^2`.
pub fn target_frequencies(
    target: &TargetModel,
    ell: usize,
    convention: Convention,
) -> Result<TargetFrequencies> {
    let m = target.model();
    let (coeffs, norm_sq) = match convention {
        Convention::FiniteD => (m.gegenbauer_coeffs(), m.norm_sq()),
        Convention::HermiteLimit => (m.hermite_coeffs(), m.hermite_norm_sq()),
    };
    let b_ell = if ell <= m.truncation_degree() {
        coeffs[ell]
    } else {
        0.0
    };
    let f_lt_sq: f64 = coeffs.iter().take(ell).map(|c| c * c).sum();
    let head: f64 = coeffs
        .iter()
        .take(ell + 1)
        .map(|c| c * c)
        .sum();
    let f_gt_sq = (norm_sq - head).max(0.0);
    let staircase = (0..coeffs.len())
        .map(|k| {
            let upto: f64 = coeffs.iter().take(k + 1).map(|c| c * c).sum();
            (norm_sq - upto).max(0.0)
        })
        .collect();
    Ok(TargetFrequencies {
        f_ell: b_ell.abs(),
        f_ell_sq: b_ell * b_ell,
        f_gt_sq,
        f_lt_sq,
        staircase,
        norm_sq,
    })
}
