//! Solvers for the coupled fixed-point systems behind the asymptotic risk
//! formulas: the real (τ1, τ2) pair at ridge parameter λ̄, the complex
//! (ν1, ν2) pair on the upper half plane, and the two-component Stieltjes
//! transform (m1, m2) of the feature-matrix spectrum.
//!
//! Solutions are certified, not trusted: every public solver re-substitutes
//! its answer into the defining equations and errors out if the residual
//! exceeds the documented budget.  The τ solver additionally runs two
//! independent computational paths (half-plane continuation vs. Newton on
//! the polynomial system) and requires them to agree.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Damping factor for the fixed-point iterations.
const DAMPING: f64 = 0.5;
/// Geometric step of the continuation ladder in Im z.
const CONTINUATION_SHRINK: f64 = 0.85;
/// Iteration budget for a single continuation leg.
const MAX_ITER_PER_LEG: usize = 100_000;
/// Successive-iterate tolerance for the ν system.
const NU_TOL: f64 = 1e-13;
/// Successive-iterate tolerance for the Stieltjes system.
const STIELTJES_TOL: f64 = 1e-12;
/// Residual budget for a certified (τ1, τ2) solution (scale-free form).
const TAU_RESIDUAL_LIMIT: f64 = 1e-10;
/// Residual budget for a certified (ν1, ν2) solution.
const NU_RESIDUAL_LIMIT: f64 = 1e-12;
/// Ulp multiplier for the ν certification's quantization floor.  A stored
/// f64 component of magnitude s cannot sit closer to the exact fixed point
/// than ~ε·s, and one map evaluation adds a few more ulps, so the absolute
/// budget above only applies beyond this floor.
const NU_EPS_BUDGET: f64 = 8.0;
/// Maximum tolerated relative gap between the two τ solution paths.
const PATH_GAP_LIMIT: f64 = 1e-8;
/// Tolerated excursion of Im ν below zero before declaring a branch failure.
const BRANCH_FLOOR: f64 = -1e-12;
/// Smallest ridge parameter the solvers accept.  The λ̄ → 0⁺ limit does not
/// commute with the dimension limit, so we refuse to evaluate near it.
pub const MIN_LAMBDA_BAR: f64 = 1e-8;

// ---------------------------------------------------------------------------
// result types
// ---------------------------------------------------------------------------

/// How a fixed-point solution was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Damped iteration of the ν system with continuation, mapped to τ.
    NuIteration,
    /// Newton iteration on the polynomial system (used to polish and
    /// cross-check the continuation path; the returned values come from it).
    Newton,
    /// Explicit algebraic formula.
    ClosedForm,
}

/// A certified solution of the (τ1, τ2) system at a real ridge parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub tau1: f64,
    pub tau2: f64,
    /// d τ1 / d λ̄ by implicit differentiation.
    pub dtau1: f64,
    /// d τ2 / d λ̄ by implicit differentiation.
    pub dtau2: f64,
    /// Residuals of the two defining equations at the returned point, in the
    /// scale-free form (both polynomial equations multiplied through by λ̄²,
    /// which has the same roots and a far smaller floating-point floor).
    pub residual1: f64,
    pub residual2: f64,
    /// Total iteration count across continuation legs and polish steps.
    pub iterations: usize,
    pub method: SolveMethod,
}

/// One evaluation of the two-component Stieltjes transform at z ∈ C₊.
#[derive(Debug, Clone, Copy)]
pub struct StieltjesPoint {
    pub z: Complex64,
    pub m1: Complex64,
    pub m2: Complex64,
}

impl StieltjesPoint {
    /// The full normalized trace m = m1 + m2.
    pub fn m(&self) -> Complex64 {
        self.m1 + self.m2
    }
}

/// Parameters of the feature-matrix spectrum: sample/feature weights
/// (θ1 for features, θ2 for samples), the level coefficient μ_ℓ, the
/// above-level mass √(μ_{>ℓ}²) and the combined ψ = ψ1 + ψ2.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectrumParams {
    pub theta1: f64,
    pub theta2: f64,
    pub mu_ell: f64,
    pub mu_gt: f64,
    pub psi: f64,
}

impl SpectrumParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta1", self.theta1),
            ("theta2", self.theta2),
            ("mu_gt", self.mu_gt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if !(self.mu_ell.is_finite() && self.mu_ell >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mu_ell must be finite and nonnegative, got {}",
                self.mu_ell
            )));
        }
        if !(self.psi.is_finite() && self.psi >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "psi must be finite and nonnegative, got {}",
                self.psi
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// damped iteration with half-plane continuation
// ---------------------------------------------------------------------------

fn is_finite_c(v: Complex64) -> bool {
    v.re.is_finite() && v.im.is_finite()
}

/// One application of the two-component transform map at spectral parameter
/// z.  `w1`, `w2` are the normalized weights θ_i/θ; `a` and `b` are the
/// squared above-level and level coefficients (1 and ζ² in the normalized ν
/// system); `psi` couples the two components.
#[inline]
fn transform_map(
    w1: f64,
    w2: f64,
    a: f64,
    b: f64,
    psi: f64,
    z: Complex64,
    m1: Complex64,
    m2: Complex64,
) -> (Complex64, Complex64) {
    let den = Complex64::new(1.0, 0.0) - psi * b * m1 * m2;
    let f1 = w1 / (-z - a * m2 - b * m2 / den);
    let f2 = w2 / (-z - a * m1 - b * m1 / den);
    (f1, f2)
}

/// Damped fixed-point iteration at a single z, from a given starting pair.
/// Returns the pair and the number of iterations used.
fn damped_leg(
    w1: f64,
    w2: f64,
    a: f64,
    b: f64,
    psi: f64,
    z: Complex64,
    start: (Complex64, Complex64),
    tol: f64,
) -> Result<((Complex64, Complex64), usize)> {
    let (mut m1, mut m2) = start;
    let mut step = f64::INFINITY;
    for it in 0..MAX_ITER_PER_LEG {
        let (f1, f2) = transform_map(w1, w2, a, b, psi, z, m1, m2);
        if !is_finite_c(f1) || !is_finite_c(f2) {
            return Err(Error::FixedPoint(format!(
                "transform iteration diverged at z = {z} after {it} iterations"
            )));
        }
        let n1 = DAMPING * m1 + (1.0 - DAMPING) * f1;
        let n2 = DAMPING * m2 + (1.0 - DAMPING) * f2;
        step = (n1 - m1).norm().max((n2 - m2).norm());
        m1 = n1;
        m2 = n2;
        if step < tol {
            return Ok(((m1, m2), it + 1));
        }
    }
    Err(Error::FixedPoint(format!(
        "transform iteration did not converge at z = {z}: last step {step:.3e} after {MAX_ITER_PER_LEG} iterations"
    )))
}

/// Solve the two-component system at z ∈ C₊ by continuation: start high on
/// the imaginary axis where the map is strongly contracting, then lower
/// Im z geometrically, warm-starting each leg from the previous solution.
fn continuation_solve(
    w1: f64,
    w2: f64,
    a: f64,
    b: f64,
    psi: f64,
    z: Complex64,
    tol: f64,
) -> Result<((Complex64, Complex64), usize)> {
    let v_target = z.im;
    let mut v = 1e3 * z.norm().max(1.0);
    let z0 = Complex64::new(z.re, v);
    let mut pair = (-w1 / z0, -w2 / z0);
    let mut total = 0usize;
    loop {
        let zk = Complex64::new(z.re, v);
        let (next, used) = damped_leg(w1, w2, a, b, psi, zk, pair, tol)?;
        pair = next;
        total += used;
        if v <= v_target {
            return Ok((pair, total));
        }
        v = (v * CONTINUATION_SHRINK).max(v_target);
    }
}

// ---------------------------------------------------------------------------
// the ν system
// ---------------------------------------------------------------------------

fn solve_nu_counted(
    theta1: f64,
    theta2: f64,
    zeta: f64,
    psi: f64,
    z: Complex64,
) -> Result<((Complex64, Complex64), usize)> {
    for (name, v) in [("theta1", theta1), ("theta2", theta2), ("zeta", zeta)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be finite and positive, got {v}"
            )));
        }
    }
    if !(psi.is_finite() && psi >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "psi must be finite and nonnegative, got {psi}"
        )));
    }
    if !is_finite_c(z) || z.im <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "spectral parameter must be finite with Im z > 0, got {z}"
        )));
    }
    let theta = theta1 + theta2;
    let (w1, w2) = (theta1 / theta, theta2 / theta);
    let b = zeta * zeta;
    let (pair, iters) = continuation_solve(w1, w2, 1.0, b, psi, z, NU_TOL)?;
    let (nu1, nu2) = pair;
    if nu1.im < BRANCH_FLOOR || nu2.im < BRANCH_FLOOR {
        return Err(Error::FixedPoint(format!(
            "wrong branch at z = {z}: Im nu = ({:.3e}, {:.3e}) below zero",
            nu1.im, nu2.im
        )));
    }
    let (f1, f2) = transform_map(w1, w2, 1.0, b, psi, z, nu1, nu2);
    // Certify each component against the map, allowing the floating-point
    // floor of the measurement itself: ulps of the stored component plus
    // ulps of the map evaluation (denominator-sum magnitudes over the
    // output magnitude, with the cancellation amplification of the inner
    // denominator tracked explicitly).  At moderate |ν| the floor is ~1e-15
    // and the absolute budget governs; at |ν| ~ 1/|z| ≫ 1 the quantization
    // of ν itself is the binding constraint.
    let den_norm = (Complex64::new(1.0, 0.0) - psi * b * nu1 * nu2).norm();
    let den_amp = ((1.0 + psi * b * nu1.norm() * nu2.norm()) / den_norm).max(1.0);
    let inner = b / den_norm * den_amp;
    let terms1 = z.norm() + nu2.norm() + inner * nu2.norm();
    let terms2 = z.norm() + nu1.norm() + inner * nu1.norm();
    for (name, nu, f, terms, w) in [
        ("nu1", nu1, f1, terms1, w1),
        ("nu2", nu2, f2, terms2, w2),
    ] {
        let residual = (nu - f).norm();
        let floor = NU_EPS_BUDGET * f64::EPSILON * (nu.norm() + terms * f.norm() * f.norm() / w);
        let allowed = NU_RESIDUAL_LIMIT + floor;
        if residual > allowed {
            return Err(Error::Accuracy(format!(
                "nu solution at z = {z} failed certification: {name} residual \
                 {residual:.3e} > {NU_RESIDUAL_LIMIT:.0e} + rounding floor {floor:.3e}"
            )));
        }
    }
    Ok((pair, iters))
}

/// Solve the (ν1, ν2) system at z ∈ C₊ for weights (θ1, θ2), level ratio ζ
/// and combined ψ = ψ1 + ψ2 (zero in the fully below-level regime).
///
/// The solution is found by damped iteration with continuation from high on
/// the imaginary axis, which realizes the analytic branch; it is certified
/// to residual < 1e-12 (beyond the f64 quantization floor of the measurement,
/// which dominates when |ν| ≫ 1) and to lie in the closed upper half plane.
pub fn solve_nu(
    theta1: f64,
    theta2: f64,
    zeta: f64,
    psi: f64,
    z: Complex64,
) -> Result<(Complex64, Complex64)> {
    solve_nu_counted(theta1, theta2, zeta, psi, z).map(|(pair, _)| pair)
}

// ---------------------------------------------------------------------------
// the (τ1, τ2) system
// ---------------------------------------------------------------------------

/// Residuals of the two τ equations in their raw polynomial form.  Exposed
/// for diagnostics; certification uses `scaled_residuals`, whose roots are
/// identical but whose floating-point floor is three to four orders lower
/// at extreme parameter corners.
pub fn raw_residuals(
    tau1: f64,
    tau2: f64,
    psi1: f64,
    psi2: f64,
    zeta: f64,
    lambda_bar: f64,
) -> (f64, f64) {
    let z2 = zeta * zeta;
    let r = psi1 / psi2;
    let f1 = z2 * tau1 * tau2 * (lambda_bar * tau1 - 1.0)
        + r * (z2 * tau1 * tau2 + (tau2 - tau1) / psi2);
    let f2 = z2 * tau1 * tau2 * (lambda_bar * tau1 - 1.0)
        + (tau1 - tau2) * (tau1 + z2 * tau2) / psi2;
    (f1, f2)
}

/// Residuals of the τ system in the scale-free variables u_i = λ̄ τ_i
/// (each equation multiplied through by λ̄²).  Same roots as the raw form.
pub fn scaled_residuals(
    tau1: f64,
    tau2: f64,
    psi1: f64,
    psi2: f64,
    zeta: f64,
    lambda_bar: f64,
) -> (f64, f64) {
    let (u1, u2) = (lambda_bar * tau1, lambda_bar * tau2);
    scaled_residuals_u(u1, u2, psi1, psi2, zeta, lambda_bar)
}

fn scaled_residuals_u(
    u1: f64,
    u2: f64,
    psi1: f64,
    psi2: f64,
    zeta: f64,
    lambda_bar: f64,
) -> (f64, f64) {
    let z2 = zeta * zeta;
    let r = psi1 / psi2;
    let g1 = z2 * u1 * u2 * (u1 - 1.0) + r * (z2 * u1 * u2 + lambda_bar * (u2 - u1) / psi2);
    let g2 = z2 * u1 * u2 * (u1 - 1.0) + (u1 - u2) * (u1 + z2 * u2) / psi2;
    (g1, g2)
}

/// Jacobian of the scale-free residuals with respect to (u1, u2).
fn scaled_jacobian(
    u1: f64,
    u2: f64,
    psi1: f64,
    psi2: f64,
    zeta: f64,
    lambda_bar: f64,
) -> [f64; 4] {
    let z2 = zeta * zeta;
    let r = psi1 / psi2;
    let j11 = z2 * u2 * (2.0 * u1 - 1.0) + r * z2 * u2 - r * lambda_bar / psi2;
    let j12 = z2 * u1 * (u1 - 1.0) + r * z2 * u1 + r * lambda_bar / psi2;
    let j21 = z2 * u2 * (2.0 * u1 - 1.0) + (2.0 * u1 + z2 * u2 - u2) / psi2;
    let j22 = z2 * u1 * (u1 - 1.0) + (-u1 - z2 * u2 + (u1 - u2) * z2) / psi2;
    [j11, j12, j21, j22]
}

/// Solve the 2×2 system J x = rhs by Cramer's rule; errors if J is
/// numerically singular, reporting a condition estimate.
fn solve_2x2(j: [f64; 4], rhs: [f64; 2], context: &str) -> Result<[f64; 2]> {
    let [j11, j12, j21, j22] = j;
    let det = j11 * j22 - j12 * j21;
    let scale = j11.abs().max(j12.abs()).max(j21.abs()).max(j22.abs());
    if !det.is_finite() || det.abs() <= 1e-14 * scale * scale {
        let cond = if det == 0.0 {
            f64::INFINITY
        } else {
            scale * scale / det.abs()
        };
        return Err(Error::FixedPoint(format!(
            "{context}: 2x2 system numerically singular (det {det:.3e}, condition estimate {cond:.3e})"
        )));
    }
    Ok([
        (rhs[0] * j22 - rhs[1] * j12) / det,
        (rhs[1] * j11 - rhs[0] * j21) / det,
    ])
}

fn validate_tau_params(psi1: f64, psi2: f64, zeta: f64, lambda_bar: f64) -> Result<()> {
    for (name, v) in [("psi1", psi1), ("psi2", psi2), ("zeta", zeta)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be finite and positive, got {v} \
                 (degenerate scalings are served by the closed-form predictors)"
            )));
        }
    }
    if !lambda_bar.is_finite() || lambda_bar < MIN_LAMBDA_BAR {
        return Err(Error::InvalidParameter(format!(
            "lambda_bar = {lambda_bar:.3e} is below the supported floor {MIN_LAMBDA_BAR:.0e}; \
             the ridgeless limit does not commute with the dimension limit"
        )));
    }
    Ok(())
}

/// Solve the (τ1, τ2) polynomial system at ridge parameter λ̄ > 0.
///
/// `psi1`/`theta1` describe the feature count and `psi2`/`theta2` the sample
/// count; the two parameterizations must be proportional (ψ_i = θ_i · ℓ!).
///
/// Primary path: solve the ν system at z = i·√(θ1 λ̄ / θ) and map to
/// (τ1, τ2) through the half-plane correspondence.  Secondary path: Newton
/// iteration on the polynomial system seeded by the primary path.  The two
/// paths must agree to 1e-8 relative (an internal-consistency guarantee far
/// below the certification budget) and the returned Newton-polished values
/// must satisfy both equations to 1e-10 in the scale-free form.
pub fn solve_tau(
    psi1: f64,
    psi2: f64,
    zeta: f64,
    lambda_bar: f64,
    theta1: f64,
    theta2: f64,
) -> Result<FixedPointSolution> {
    validate_tau_params(psi1, psi2, zeta, lambda_bar)?;
    for (name, v) in [("theta1", theta1), ("theta2", theta2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be finite and positive, got {v}"
            )));
        }
    }
    let cross = (psi1 * theta2 - psi2 * theta1).abs();
    if cross > 1e-9 * (psi1 * theta2 + psi2 * theta1) {
        return Err(Error::InvalidParameter(format!(
            "(psi1, psi2) = ({psi1}, {psi2}) and (theta1, theta2) = ({theta1}, {theta2}) \
             describe different scalings; psi_i must equal theta_i times a common factor"
        )));
    }

    // --- primary path: ν continuation + correspondence ---
    let theta = theta1 + theta2;
    let psi = psi1 + psi2;
    let z2 = zeta * zeta;
    let v_target = (theta1 * lambda_bar / theta).sqrt();
    let z = Complex64::new(0.0, v_target);
    let ((nu1, nu2), nu_iters) = solve_nu_counted(theta1, theta2, zeta, psi, z)?;
    let pref = Complex64::new(0.0, -(theta1 * theta / (theta2 * theta2 * lambda_bar)).sqrt());
    let tau1_nu = (pref * nu2).re;
    let tau2_nu = tau1_nu / (1.0 - z2 * psi * (nu1 * nu2).re);
    if !(tau1_nu.is_finite() && tau2_nu.is_finite() && tau1_nu > 0.0 && tau2_nu > 0.0) {
        return Err(Error::FixedPoint(format!(
            "correspondence produced non-positive traces ({tau1_nu:.6e}, {tau2_nu:.6e}) \
             at (psi1, psi2, zeta, lambda_bar) = ({psi1}, {psi2}, {zeta}, {lambda_bar})"
        )));
    }

    // --- secondary path: Newton in the scale-free variables ---
    let (mut u1, mut u2) = (lambda_bar * tau1_nu, lambda_bar * tau2_nu);
    let mut newton_iters = 0usize;
    for _ in 0..100 {
        let (g1, g2) = scaled_residuals_u(u1, u2, psi1, psi2, zeta, lambda_bar);
        let j = scaled_jacobian(u1, u2, psi1, psi2, zeta, lambda_bar);
        let [d1, d2] = solve_2x2(j, [-g1, -g2], "Newton polish of the tau system")?;
        u1 += d1;
        u2 += d2;
        newton_iters += 1;
        if d1.abs().max(d2.abs()) <= 1e-15 * u1.abs().max(u2.abs()).max(1e-300) {
            break;
        }
    }
    let (tau1, tau2) = (u1 / lambda_bar, u2 / lambda_bar);

    // --- cross-path agreement ---
    let gap = ((tau1 - tau1_nu) / tau1)
        .abs()
        .max(((tau2 - tau2_nu) / tau2).abs());
    if !gap.is_finite() || gap > PATH_GAP_LIMIT {
        return Err(Error::PathDisagreement {
            gap,
            psi1,
            psi2,
            zeta,
            lambda_bar,
        });
    }

    // --- certification ---
    // No algorithm can push the residual below the noise of evaluating the
    // equations at f64-rounded arguments, which is the Jacobian acting on
    // one ulp of (u1, u2).  The budget is the documented 1e-10 plus that
    // floor; over the moderate-parameter domain the floor is ~1e-15 and the
    // bound is effectively absolute (see the grid test below).
    let (g1, g2) = scaled_residuals_u(u1, u2, psi1, psi2, zeta, lambda_bar);
    let j = scaled_jacobian(u1, u2, psi1, psi2, zeta, lambda_bar);
    let noise_floor = 8.0
        * f64::EPSILON
        * (j[0].abs() + j[1].abs())
            .max(j[2].abs() + j[3].abs())
        * u1.abs().max(u2.abs());
    let budget = TAU_RESIDUAL_LIMIT + noise_floor;
    let residual = g1.abs().max(g2.abs());
    if !residual.is_finite() || residual > budget {
        return Err(Error::Accuracy(format!(
            "tau solution failed certification at (psi1, psi2, zeta, lambda_bar) = \
             ({psi1}, {psi2}, {zeta}, {lambda_bar}): residual {residual:.3e} > {budget:.3e}"
        )));
    }
    if !(tau1 > 0.0 && tau2 > 0.0) {
        return Err(Error::FixedPoint(format!(
            "non-positive trace pair ({tau1:.6e}, {tau2:.6e}) after polish"
        )));
    }

    let (dtau1, dtau2) = tau_derivatives(tau1, tau2, psi1, psi2, zeta, lambda_bar)?;
    Ok(FixedPointSolution {
        tau1,
        tau2,
        dtau1,
        dtau2,
        residual1: g1,
        residual2: g2,
        iterations: nu_iters + newton_iters,
        method: SolveMethod::Newton,
    })
}

/// Derivatives (dτ1/dλ̄, dτ2/dλ̄) by implicit differentiation of the two
/// polynomial equations at a solution point.
pub fn tau_derivatives(
    tau1: f64,
    tau2: f64,
    psi1: f64,
    psi2: f64,
    zeta: f64,
    lambda_bar: f64,
) -> Result<(f64, f64)> {
    validate_tau_params(psi1, psi2, zeta, lambda_bar)?;
    let z2 = zeta * zeta;
    let r = psi1 / psi2;
    let (t1, t2) = (tau1, tau2);
    let lb = lambda_bar;
    // Jacobian of the raw polynomial system with respect to (tau1, tau2).
    let j11 = z2 * t2 * (lb * t1 - 1.0) + z2 * t1 * t2 * lb + r * (z2 * t2 - 1.0 / psi2);
    let j12 = z2 * t1 * (lb * t1 - 1.0) + r * (z2 * t1 + 1.0 / psi2);
    let j21 =
        z2 * t2 * (lb * t1 - 1.0) + z2 * t1 * t2 * lb + (2.0 * t1 + z2 * t2 - t2) / psi2;
    let j22 = z2 * t1 * (lb * t1 - 1.0) + (-t1 - z2 * t2 + (t1 - t2) * z2) / psi2;
    // Both equations depend on λ̄ only through the common term ζ²τ1²τ2·λ̄.
    let e = z2 * t1 * t1 * t2;
    let [d1, d2] = solve_2x2(
        [j11, j12, j21, j22],
        [-e, -e],
        "implicit differentiation of the tau system",
    )?;
    Ok((d1, d2))
}

/// Explicit (τ, τ′) for the fully below-level critical scaling, where the
/// system collapses to a single quadratic and τ1 = τ2.  `gamma` is the
/// feature/sample weight ratio θ1/θ2.
pub fn tau_closed_form(gamma: f64, zeta: f64, lambda_bar: f64) -> Result<FixedPointSolution> {
    for (name, v) in [("gamma", gamma), ("zeta", zeta)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be finite and positive, got {v}"
            )));
        }
    }
    if !lambda_bar.is_finite() || lambda_bar < MIN_LAMBDA_BAR {
        return Err(Error::InvalidParameter(format!(
            "lambda_bar = {lambda_bar:.3e} is below the supported floor {MIN_LAMBDA_BAR:.0e}"
        )));
    }
    let c = gamma / (1.0 + zeta * zeta);
    let t_lin = 1.0 - gamma - c * lambda_bar;
    let disc = t_lin * t_lin + 4.0 * c * lambda_bar;
    let sq = disc.sqrt();
    // Positive root of λ̄τ² − t_lin·τ − c = 0, written in whichever of the
    // two algebraically equal forms avoids cancellation.
    let tau = if t_lin >= 0.0 {
        (t_lin + sq) / (2.0 * lambda_bar)
    } else {
        2.0 * c / (sq - t_lin)
    };
    // Implicit differentiation of the quadratic; 2λ̄τ − t_lin = √disc > 0.
    let dtau = -(tau * tau + c * tau) / (2.0 * lambda_bar * tau - t_lin);
    let residual = lambda_bar * tau * tau - t_lin * tau - c;
    Ok(FixedPointSolution {
        tau1: tau,
        tau2: tau,
        dtau1: dtau,
        dtau2: dtau,
        residual1: residual,
        residual2: residual,
        iterations: 0,
        method: SolveMethod::ClosedForm,
    })
}

// ---------------------------------------------------------------------------
// Stieltjes transform of the feature-matrix spectrum
// ---------------------------------------------------------------------------

fn certify_stieltjes(
    z: Complex64,
    m1: Complex64,
    m2: Complex64,
) -> Result<StieltjesPoint> {
    if m1.im < BRANCH_FLOOR || m2.im < BRANCH_FLOOR {
        return Err(Error::FixedPoint(format!(
            "wrong branch at z = {z}: Im m = ({:.3e}, {:.3e}) below zero",
            m1.im, m2.im
        )));
    }
    let bound = (1.0 + 1e-9) / z.im;
    if (m1 + m2).norm() > bound {
        return Err(Error::FixedPoint(format!(
            "Stieltjes bound violated at z = {z}: |m| = {:.6e} > 1/Im z = {:.6e}",
            (m1 + m2).norm(),
            1.0 / z.im
        )));
    }
    Ok(StieltjesPoint { z, m1, m2 })
}

/// Solve the two-component Stieltjes system at z ∈ C₊ by damped iteration
/// with continuation from high on the imaginary axis.
pub fn solve_stieltjes(params: &SpectrumParams, z: Complex64) -> Result<StieltjesPoint> {
    params.validate()?;
    if !is_finite_c(z) || z.im <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "spectral parameter must be finite with Im z > 0, got {z}"
        )));
    }
    let theta = params.theta1 + params.theta2;
    let (w1, w2) = (params.theta1 / theta, params.theta2 / theta);
    let a = params.mu_gt * params.mu_gt;
    let b = params.mu_ell * params.mu_ell;
    let ((m1, m2), _) = continuation_solve(w1, w2, a, b, params.psi, z, STIELTJES_TOL)?;
    certify_stieltjes(z, m1, m2)
}

/// Like `solve_stieltjes`, but seeded from a nearby solution (for sweeps
/// along a grid).  Falls back to full continuation if the warm start stalls.
pub fn solve_stieltjes_warm(
    params: &SpectrumParams,
    z: Complex64,
    warm: (Complex64, Complex64),
) -> Result<StieltjesPoint> {
    params.validate()?;
    if !is_finite_c(z) || z.im <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "spectral parameter must be finite with Im z > 0, got {z}"
        )));
    }
    let theta = params.theta1 + params.theta2;
    let (w1, w2) = (params.theta1 / theta, params.theta2 / theta);
    let a = params.mu_gt * params.mu_gt;
    let b = params.mu_ell * params.mu_ell;
    match damped_leg(w1, w2, a, b, params.psi, z, warm, STIELTJES_TOL) {
        Ok(((m1, m2), _)) => certify_stieltjes(z, m1, m2),
        Err(_) => solve_stieltjes(params, z),
    }
}

/// Theoretical density of the singular values of the feature matrix on a
/// sorted grid of the singular-value axis, evaluated at smoothing η.
///
/// The block-matrix spectrum lives on the axis E = s/√(θ/θ1); the returned
/// values are normalized so that in the square case the positive-axis bulk
/// integrates to one (matching a histogram of all feature-Gram eigenvalues).
pub fn singular_value_density(
    params: &SpectrumParams,
    s_grid: &[f64],
    eta: f64,
) -> Result<Vec<f64>> {
    params.validate()?;
    if !(1e-4..=1e-2).contains(&eta) {
        return Err(Error::InvalidParameter(format!(
            "smoothing eta = {eta} outside the supported range [1e-4, 1e-2]"
        )));
    }
    if s_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "singular-value grid is empty".into(),
        ));
    }
    if s_grid
        .windows(2)
        .any(|w| !(w[0] <= w[1]) || !w[0].is_finite())
        || !s_grid[s_grid.len() - 1].is_finite()
        || s_grid[0] < 0.0
    {
        return Err(Error::InvalidParameter(
            "singular-value grid must be finite, nonnegative and sorted ascending".into(),
        ));
    }
    let theta = params.theta1 + params.theta2;
    let ratio = theta / params.theta1;
    let scale = ratio.sqrt();
    let mut density = Vec::with_capacity(s_grid.len());
    let mut warm: Option<(Complex64, Complex64)> = None;
    for (idx, &s) in s_grid.iter().enumerate() {
        let z = Complex64::new(s / scale, eta);
        let point = match warm {
            Some(pair) => solve_stieltjes_warm(params, z, pair),
            None => solve_stieltjes(params, z),
        }
        .map_err(|e| match e {
            Error::FixedPoint(msg) => {
                Error::FixedPoint(format!("grid point {idx} (s = {s}): {msg}"))
            }
            other => other,
        })?;
        warm = Some((point.m1, point.m2));
        density.push(ratio * point.m().im / std::f64::consts::PI / scale);
    }
    Ok(density)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_rel(a: f64, b: f64, tol: f64, what: &str) {
        let denom = b.abs().max(1e-300);
        assert!(
            ((a - b) / denom).abs() <= tol,
            "{what}: {a} vs {b} (rel {:.3e})",
            ((a - b) / denom).abs()
        );
    }

    // Reference solutions certified by enumerating all roots of the
    // resultant of the two cubics and keeping the unique admissible pair.
    const POINT_A: (f64, f64, f64, f64) = (1.0, 1.0, 1.0, 1.0);
    const POINT_A_TAU: (f64, f64) = (0.51879006367588422190745389443528, 0.40877191180704108235445196730134217);
    const POINT_A_DTAU: (f64, f64) = (-0.35612106060275222929574725289738449, -0.24827483451481231361221050027481895);
    const POINT_B: (f64, f64, f64, f64) = (0.25, 4.0, 0.5, 0.1);
    const POINT_B_TAU: (f64, f64) = (9.3783463018638145839709978413320981, 8.9299516040314214242316899242424432);
    const POINT_B_DTAU: (f64, f64) = (-93.750192624254045992555130152741345, -89.244774002924858753318343374226538);
    const POINT_C: (f64, f64, f64, f64) = (4.0, 0.25, 2.0, 10.0);
    const POINT_C_TAU: (f64, f64) = (0.068236279070790515550177401634748595, 0.063958622153139928537390633072906843);
    const POINT_C_DTAU: (f64, f64) = (-0.0047581198106232520517088121920192682, -0.0041855370553822951517154836137648106);

    fn solve_point(p: (f64, f64, f64, f64)) -> FixedPointSolution {
        solve_tau(p.0, p.1, p.2, p.3, p.0, p.1).unwrap()
    }

    #[test]
    fn frozen_points_match_root_enumeration() {
        for (p, tau, dtau) in [
            (POINT_A, POINT_A_TAU, POINT_A_DTAU),
            (POINT_B, POINT_B_TAU, POINT_B_DTAU),
            (POINT_C, POINT_C_TAU, POINT_C_DTAU),
        ] {
            let sol = solve_point(p);
            assert_rel(sol.tau1, tau.0, 1e-12, "tau1");
            assert_rel(sol.tau2, tau.1, 1e-12, "tau2");
            assert_rel(sol.dtau1, dtau.0, 1e-10, "dtau1");
            assert_rel(sol.dtau2, dtau.1, 1e-10, "dtau2");
            assert_eq!(sol.method, SolveMethod::Newton);
            assert!(sol.iterations > 0);
        }
    }

    #[test]
    fn residuals_certified_across_the_parameter_grid() {
        let psis = [0.1, 0.25, 1.0, 4.0, 10.0];
        let zetas = [0.5, 1.0, 2.0];
        let lambdas = [1e-3, 0.1, 1.0, 10.0];
        let mut worst_scaled = 0.0f64;
        let mut worst_raw = 0.0f64;
        for &p1 in &psis {
            for &p2 in &psis {
                for &zeta in &zetas {
                    for &lb in &lambdas {
                        let sol = solve_tau(p1, p2, zeta, lb, p1, p2).unwrap();
                        assert!(sol.tau1 > 0.0 && sol.tau2 > 0.0);
                        assert!(sol.dtau1 < 0.0 && sol.dtau2 < 0.0, "traces decrease in the ridge");
                        worst_scaled = worst_scaled
                            .max(sol.residual1.abs())
                            .max(sol.residual2.abs());
                        let (f1, f2) = raw_residuals(sol.tau1, sol.tau2, p1, p2, zeta, lb);
                        worst_raw = worst_raw.max(f1.abs()).max(f2.abs());
                    }
                }
            }
        }
        assert!(
            worst_scaled < 1e-10,
            "scale-free residual floor {worst_scaled:.3e}"
        );
        // The raw polynomial form loses three to four digits at the grid
        // corners; this records why certification uses the scale-free form.
        assert!(worst_raw < 1e-7, "raw residual floor {worst_raw:.3e}");
    }

    #[test]
    fn heavy_ridge_collapses_traces_to_inverse_ridge() {
        for (p1, p2, zeta) in [(0.1, 10.0, 0.5), (1.0, 1.0, 1.0), (10.0, 0.1, 2.0)] {
            let sol = solve_tau(p1, p2, zeta, 1e6, p1, p2).unwrap();
            assert_rel(sol.tau1 * 1e6, 1.0, 0.01, "lambda*tau1");
            assert_rel(sol.tau2 * 1e6, 1.0, 0.01, "lambda*tau2");
            assert_rel(sol.dtau1 * 1e12, -1.0, 0.02, "lambda^2*dtau1");
        }
    }

    #[test]
    fn vanishing_psi_limit_matches_the_closed_form() {
        for gamma in [0.5, 1.0, 2.0] {
            let closed = tau_closed_form(gamma, 1.3, 0.7).unwrap();
            let scale = 1e-6;
            let sol = solve_tau(gamma * scale, scale, 1.3, 0.7, gamma * scale, scale).unwrap();
            assert_rel(sol.tau1, closed.tau1, 1e-6, "tau1 at vanishing psi");
            assert_rel(sol.tau2, closed.tau2, 1e-6, "tau2 at vanishing psi");
            assert_rel(sol.dtau1, closed.dtau1, 1e-5, "dtau1 at vanishing psi");
        }
    }

    #[test]
    fn closed_form_reference_values() {
        let sol = tau_closed_form(1.0, 1.0, 1.0).unwrap();
        assert_rel(sol.tau1, 0.5, 1e-15, "tau at (1,1,1)");
        assert_eq!(sol.tau1, sol.tau2);
        assert_eq!(sol.method, SolveMethod::ClosedForm);

        let heavy = tau_closed_form(0.7, 1.2, 1e6).unwrap();
        assert_rel(heavy.tau1 * 1e6, 1.0, 0.01, "heavy-ridge closed form");
        assert_rel(heavy.dtau1 * 1e12, -1.0, 0.02, "heavy-ridge derivative");

        // severely feature-starved limit: tau -> 1 at unit ridge
        let starved = tau_closed_form(1e-8, 1.0, 1.0).unwrap();
        assert_rel(starved.tau1, 1.0, 1e-6, "gamma -> 0");

        assert!(tau_closed_form(1.0, 1.0, 1e-9).is_err());
        assert!(tau_closed_form(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_derivative_matches_finite_differences() {
        for (gamma, zeta, lb) in [(1.0, 1.0, 1.0), (0.25, 2.0, 0.05), (3.0, 0.6, 4.0)] {
            let sol = tau_closed_form(gamma, zeta, lb).unwrap();
            let h = 1e-5 * lb;
            let hi = tau_closed_form(gamma, zeta, lb + h).unwrap();
            let lo = tau_closed_form(gamma, zeta, lb - h).unwrap();
            let fd = (hi.tau1 - lo.tau1) / (2.0 * h);
            assert_rel(sol.dtau1, fd, 1e-8, "closed-form derivative");
        }
    }

    #[test]
    fn implicit_derivatives_match_finite_differences() {
        for p in [POINT_A, POINT_B, POINT_C, (0.7, 2.3, 1.4, 0.3)] {
            let (p1, p2, zeta, lb) = p;
            let sol = solve_tau(p1, p2, zeta, lb, p1, p2).unwrap();
            let h = 1e-5 * lb;
            let hi = solve_tau(p1, p2, zeta, lb + h, p1, p2).unwrap();
            let lo = solve_tau(p1, p2, zeta, lb - h, p1, p2).unwrap();
            assert_rel(sol.dtau1, (hi.tau1 - lo.tau1) / (2.0 * h), 1e-6, "dtau1 vs fd");
            assert_rel(sol.dtau2, (hi.tau2 - lo.tau2) / (2.0 * h), 1e-6, "dtau2 vs fd");
        }
    }

    #[test]
    fn tau_solver_validates_inputs() {
        assert!(matches!(
            solve_tau(1.0, 1.0, 1.0, 1e-9, 1.0, 1.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(solve_tau(0.0, 1.0, 1.0, 1.0, 0.0, 1.0).is_err());
        // psi and theta must be proportional
        assert!(matches!(
            solve_tau(1.0, 1.0, 1.0, 1.0, 1.0, 3.0),
            Err(Error::InvalidParameter(_))
        ));
        // equal rescaling of both is fine
        let a = solve_tau(2.0, 6.0, 1.0, 1.0, 2.0, 6.0).unwrap();
        let b = solve_tau(2.0, 6.0, 1.0, 1.0, 1.0, 3.0).unwrap();
        assert_rel(a.tau1, b.tau1, 1e-12, "theta scale invariance");
    }

    #[test]
    fn nu_large_argument_decay() {
        let (t1, t2, zeta, psi) = (1.3, 0.6, 0.8, 2.5);
        for z in [
            Complex64::new(0.0, 1e6),
            Complex64::new(6e5, 8e5),
        ] {
            let (nu1, nu2) = solve_nu(t1, t2, zeta, psi, z).unwrap();
            let w1 = t1 / (t1 + t2);
            let w2 = t2 / (t1 + t2);
            assert!(((nu1 - (-w1 / z)).norm() / (w1 / z).norm()) < 0.01);
            assert!(((nu2 - (-w2 / z)).norm() / (w2 / z).norm()) < 0.01);
        }
    }

    #[test]
    fn nu_is_purely_imaginary_on_the_imaginary_axis() {
        for u in [0.1, 1.0, 10.0] {
            let (nu1, nu2) = solve_nu(0.8, 1.7, 1.2, 3.1, Complex64::new(0.0, u)).unwrap();
            assert!(nu1.re.abs() < 1e-10, "Re nu1 = {:.3e}", nu1.re);
            assert!(nu2.re.abs() < 1e-10, "Re nu2 = {:.3e}", nu2.re);
            assert!(nu1.im > 0.0 && nu2.im > 0.0);
        }
    }

    #[test]
    fn nu_trace_difference_identity() {
        // nu1 - nu2 = (theta2 - theta1) / (theta z) holds exactly off the
        // imaginary axis as well.
        let (t1, t2) = (0.9, 2.1);
        for z in [Complex64::new(0.7, 0.9), Complex64::new(-1.3, 0.4)] {
            let (nu1, nu2) = solve_nu(t1, t2, 1.1, 1.7, z).unwrap();
            let expect = (t2 - t1) / ((t1 + t2) * z);
            assert!(
                (nu1 - nu2 - expect).norm() < 1e-11,
                "identity gap {:.3e}",
                (nu1 - nu2 - expect).norm()
            );
        }
    }

    #[test]
    fn nu_decoupled_case_matches_the_quadratic_formula() {
        // At psi = 0 the denominators decouple and nu2 solves the quadratic
        // b u^2 + (z + b delta) u + w2 = 0 with b = 1 + zeta^2 and
        // delta = (theta2 - theta1)/(theta z); the admissible root is the
        // one in the closed upper half plane.
        let (t1, t2, zeta) = (1.4, 0.9, 0.75);
        let theta = t1 + t2;
        let b = Complex64::new(1.0 + zeta * zeta, 0.0);
        for z in [Complex64::new(0.0, 0.8), Complex64::new(0.5, 1.1)] {
            let (_, nu2) = solve_nu(t1, t2, zeta, 0.0, z).unwrap();
            let delta = (t2 - t1) / (theta * z);
            let bq = z + b * delta;
            let cq = Complex64::new(t2 / theta, 0.0);
            let disc = (bq * bq - 4.0 * b * cq).sqrt();
            let roots = [(-bq + disc) / (2.0 * b), (-bq - disc) / (2.0 * b)];
            let admissible = roots
                .into_iter()
                .find(|r| r.im >= 0.0)
                .expect("one root lies in the upper half plane");
            assert!(
                (nu2 - admissible).norm() < 1e-10,
                "quadratic gap {:.3e}",
                (nu2 - admissible).norm()
            );
        }
    }

    #[test]
    fn nu_rejects_bad_arguments() {
        assert!(solve_nu(1.0, 1.0, 1.0, 1.0, Complex64::new(1.0, 0.0)).is_err());
        assert!(solve_nu(1.0, 1.0, 1.0, 1.0, Complex64::new(1.0, -0.5)).is_err());
        assert!(solve_nu(0.0, 1.0, 1.0, 1.0, Complex64::new(0.0, 1.0)).is_err());
        assert!(solve_nu(1.0, 1.0, 1.0, -0.1, Complex64::new(0.0, 1.0)).is_err());
    }

    fn spectrum_fixture() -> SpectrumParams {
        // parameters of the spectra experiment: sigma = 2x^2 + x^3 at level
        // 2, feature/sample weights (psi1, psi2) = (1, 2)
        SpectrumParams {
            theta1: 0.5,
            theta2: 1.0,
            mu_ell: 2.74562589193457644693827452024,
            mu_gt: 5.03369493754109138724523339911f64.sqrt(),
            psi: 3.0,
        }
    }

    #[test]
    fn stieltjes_large_argument_and_half_plane_bounds() {
        let params = spectrum_fixture();
        let far = solve_stieltjes(&params, Complex64::new(0.0, 1e6)).unwrap();
        let expect = -1.0 / Complex64::new(0.0, 1e6);
        assert!((far.m() - expect).norm() / expect.norm() < 0.01);

        let mut warm = None;
        for i in 0..50 {
            let e = 0.3 + 3.7 * (i as f64) / 49.0;
            let z = Complex64::new(e, 1e-3);
            let pt = match warm {
                Some(w) => solve_stieltjes_warm(&params, z, w).unwrap(),
                None => solve_stieltjes(&params, z).unwrap(),
            };
            assert!(pt.m1.im >= 0.0 && pt.m2.im >= 0.0);
            assert!(pt.m().norm() <= 1.0 / 1e-3 * (1.0 + 1e-9));
            warm = Some((pt.m1, pt.m2));
        }
    }

    #[test]
    fn stieltjes_warm_start_agrees_with_cold_solves() {
        let params = spectrum_fixture();
        let mut warm = None;
        for i in 0..12 {
            let e = 0.5 + 0.25 * i as f64;
            let z = Complex64::new(e, 2e-3);
            let cold = solve_stieltjes(&params, z).unwrap();
            let pt = match warm {
                Some(w) => solve_stieltjes_warm(&params, z, w).unwrap(),
                None => cold,
            };
            assert!((pt.m1 - cold.m1).norm() < 1e-9);
            assert!((pt.m2 - cold.m2).norm() < 1e-9);
            warm = Some((pt.m1, pt.m2));
        }
    }

    #[test]
    fn stieltjes_degenerate_level_reduces_to_the_semicircle() {
        // With no level component the symmetrized square-case spectrum is a
        // semicircle of radius sqrt(2 a); its transform has a closed form.
        let a = 1.7f64;
        let params = SpectrumParams {
            theta1: 1.0,
            theta2: 1.0,
            mu_ell: 0.0,
            mu_gt: a.sqrt(),
            psi: 5.0,
        };
        for z in [Complex64::new(0.3, 0.05), Complex64::new(-1.1, 0.4)] {
            let pt = solve_stieltjes(&params, z).unwrap();
            let mut root = (z * z - 2.0 * a).sqrt();
            if root.im < 0.0 {
                root = -root;
            }
            let m_exact = (-z + root) / a;
            assert!(
                (pt.m() - m_exact).norm() < 1e-9,
                "semicircle gap {:.3e} at z = {z}",
                (pt.m() - m_exact).norm()
            );
        }
    }

    #[test]
    fn density_mass_and_positivity() {
        let params = spectrum_fixture();
        let scale = (3.0f64).sqrt();
        let n = 1600;
        let (lo, hi) = (0.25 * scale, 14.0);
        let grid: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let density = singular_value_density(&params, &grid, 1e-3).unwrap();
        assert!(density.iter().all(|&f| f >= -1e-8));
        let h = (hi - lo) / (n - 1) as f64;
        let mass: f64 = density
            .iter()
            .enumerate()
            .map(|(i, &f)| if i == 0 || i == n - 1 { 0.5 * f } else { f } * h)
            .sum();
        assert!(
            (mass - 1.0).abs() <= 0.02,
            "bulk mass {mass:.4} should be 1 +- 0.02"
        );
    }

    #[test]
    fn density_validates_grid_and_smoothing() {
        let params = spectrum_fixture();
        assert!(singular_value_density(&params, &[1.0, 2.0], 0.5).is_err());
        assert!(singular_value_density(&params, &[2.0, 1.0], 1e-3).is_err());
        assert!(singular_value_density(&params, &[], 1e-3).is_err());
    }
}
