//! Special functions on the sphere `S^{d-1}(sqrt(d))`.
//!
//! The central object is the orthonormal Gegenbauer family `{q_k}` for the
//! single-coordinate marginal `tau_{d,1}` (the law of `<x, w>` for `x`
//! uniform on the radius-`sqrt(d)` sphere and `w` a unit vector), plus the
//! exact dimensions `N_k` of the degree-`k` spherical harmonic subspaces,
//! Gaussian quadrature rules for `tau_{d,1}` and the standard normal, and
//! uniform sphere sampling.

use crate::error::{Error, Result};
use crate::linalg;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Largest polynomial degree supported anywhere in the crate.  Beyond this
/// the harmonic subspaces are astronomically high-dimensional and none of
/// the finite-size machinery could touch them anyway.
pub const MAX_DEGREE: usize = 16;

// ---------------------------------------------------------------------------
// Exact integer combinatorics
// ---------------------------------------------------------------------------

/// Binomial coefficient in checked 128-bit arithmetic.  Each step of
/// `r = r * (n-k+i) / i` is exact (the running product of `i` consecutive
/// binomial steps is divisible by `i`).
pub fn binom_u128(n: u128, k: u128) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 1..=k {
        r = r
            .checked_mul(n - k + i)
            .ok_or_else(|| Error::Overflow(format!("binomial({n}, {k}) exceeds 128 bits")))?
            / i;
    }
    Ok(r)
}

/// Dimension `N_k` of the degree-`k` spherical harmonics on `S^{d-1}`:
/// `N_0 = 1`, `N_1 = d`, and in general
/// `N_k = C(d+k-1, k) - C(d+k-3, k-2)` (exact integers, no division).
pub fn subspace_dim(d: usize, k: usize) -> Result<u128> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!(
            "subspace_dim requires ambient dimension d >= 2, got {d}"
        )));
    }
    let (d, k) = (d as u128, k as u128);
    match k {
        0 => Ok(1),
        1 => Ok(d),
        _ => {
            let big = binom_u128(d + k - 1, k)?;
            let small = binom_u128(d + k - 3, k - 2)?;
            Ok(big - small)
        }
    }
}

// ---------------------------------------------------------------------------
// Moments of tau_{d,1}
// ---------------------------------------------------------------------------

/// `E[t^m]` for `t ~ tau_{d,1}`.  Odd moments vanish; even moments are
/// `(2k-1)!! / prod_{i<k} (1 + 2i/d)`, evaluated as a running product of
/// bounded ratios so no intermediate overflows.
pub fn tau_d1_moment(d: usize, m: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!(
            "tau_d1_moment requires d >= 2, got {d}"
        )));
    }
    if m % 2 == 1 {
        return Ok(0.0);
    }
    let df = d as f64;
    let mut r = 1.0;
    for i in 0..(m / 2) {
        let odd = (2 * i + 1) as f64;
        r *= odd / (1.0 + 2.0 * (i as f64) / df);
    }
    Ok(r)
}

/// Half-range moment `E[t^j ; t > 0]` for `t ~ tau_{d,1}` — the building
/// block for exact Gegenbauer coefficients of kinked activations.  Even
/// powers are half the full moment by symmetry; odd powers start from
/// `E[t; t>0] = sqrt(d) / ((d-1) B(1/2, (d-1)/2))` and follow the
/// recurrence `I_{2m+1} = (m d / ((d-1)/2 + m)) I_{2m-1}`.
pub fn tau_d1_half_moment(d: usize, j: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!(
            "tau_d1_half_moment requires d >= 2, got {d}"
        )));
    }
    if j % 2 == 0 {
        return Ok(tau_d1_moment(d, j)? / 2.0);
    }
    let df = d as f64;
    let ln_beta = ln_gamma(0.5) + ln_gamma((df - 1.0) / 2.0) - ln_gamma(df / 2.0);
    let mut i = df.sqrt() / ((df - 1.0) * ln_beta.exp());
    let mut m = 0usize;
    while 2 * m + 1 < j {
        m += 1;
        i *= (m as f64) * df / ((df - 1.0) / 2.0 + m as f64);
    }
    Ok(i)
}

/// Natural log of the gamma function (Lanczos, g = 7), accurate to
/// ~1e-14 relative over the positive reals used here.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

// ---------------------------------------------------------------------------
// Orthonormal Gegenbauer family
// ---------------------------------------------------------------------------

/// The orthonormal polynomials `q_0, ..., q_kmax` of `tau_{d,1}`:
/// `E[q_j q_k] = delta_{jk}`, `q_k(sqrt(d)) = sqrt(N_k)`, built from the
/// three-term recurrence
/// `q_{k+1}(t) = (t q_k(t) - c_k q_{k-1}(t)) / c_{k+1}` with coupling
/// `c_k = sqrt(d k (k+d-3) / ((2k+d-2)(2k+d-4)))` and `c_1 = 1` (the
/// formula is 0/0 at `k = 1` when `d = 2`; its limit is 1 for every `d`).
#[derive(Debug, Clone)]
pub struct GegenbauerBasis {
    d: usize,
    kmax: usize,
    /// `c[k]` is the coupling `c_k`; `c[0]` is unused.
    c: Vec<f64>,
}

impl GegenbauerBasis {
    pub fn new(d: usize, kmax: usize) -> Result<GegenbauerBasis> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!(
                "Gegenbauer basis requires d >= 2, got {d}"
            )));
        }
        if kmax > MAX_DEGREE {
            return Err(Error::InvalidParameter(format!(
                "degree cap is {MAX_DEGREE}, requested kmax = {kmax}"
            )));
        }
        let df = d as f64;
        let mut c = vec![0.0; kmax + 2];
        for (k, ck) in c.iter_mut().enumerate().skip(1) {
            *ck = if k == 1 {
                1.0
            } else {
                let kf = k as f64;
                (df * kf * (kf + df - 3.0) / ((2.0 * kf + df - 2.0) * (2.0 * kf + df - 4.0)))
                    .sqrt()
            };
        }
        Ok(GegenbauerBasis { d, kmax, c })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn max_degree(&self) -> usize {
        self.kmax
    }

    /// Coupling coefficient `c_k` for `1 <= k <= kmax + 1`.
    pub fn coupling(&self, k: usize) -> f64 {
        self.c[k]
    }

    fn check_degree(&self, k: usize) -> Result<()> {
        if k > self.kmax {
            return Err(Error::InvalidParameter(format!(
                "degree {k} out of range for basis with max degree {}",
                self.kmax
            )));
        }
        Ok(())
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let lim = (self.d as f64).sqrt();
        if !t.is_finite() || t.abs() > lim * (1.0 + 1e-9) + 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "argument {t} outside [-sqrt(d), sqrt(d)] = [-{lim}, {lim}]"
            )));
        }
        Ok(())
    }

    /// `q_k(t)` with degree and domain checks.
    pub fn eval(&self, k: usize, t: f64) -> Result<f64> {
        self.check_degree(k)?;
        self.check_domain(t)?;
        let (mut prev, mut cur) = (1.0, t);
        if k == 0 {
            return Ok(prev);
        }
        for j in 1..k {
            let next = (t * cur - self.c[j] * prev) / self.c[j + 1];
            prev = cur;
            cur = next;
        }
        Ok(cur)
    }

    /// `[q_0(t), ..., q_kmax(t)]`.
    pub fn eval_all(&self, t: f64) -> Result<Vec<f64>> {
        self.check_domain(t)?;
        let mut out = Vec::with_capacity(self.kmax + 1);
        out.push(1.0);
        if self.kmax >= 1 {
            out.push(t);
        }
        for k in 1..self.kmax {
            let next = (t * out[k] - self.c[k] * out[k - 1]) / self.c[k + 1];
            out.push(next);
        }
        Ok(out)
    }

    /// `sum_k coeffs[k] q_k(t)` with checks.
    pub fn eval_series(&self, coeffs: &[f64], t: f64) -> Result<f64> {
        if coeffs.len() > self.kmax + 1 {
            return Err(Error::InvalidParameter(format!(
                "series has {} coefficients but basis max degree is {}",
                coeffs.len(),
                self.kmax
            )));
        }
        self.check_domain(t)?;
        Ok(self.eval_series_raw(coeffs, t))
    }

    /// Series evaluation without validation — the hot path for feature
    /// matrices, where the arguments are inner products already bounded
    /// by construction.  Three running scalars, no allocation.
    #[inline]
    pub(crate) fn eval_series_raw(&self, coeffs: &[f64], t: f64) -> f64 {
        let mut acc = 0.0;
        let (mut prev, mut cur) = (1.0, t);
        for (k, &ck) in coeffs.iter().enumerate() {
            let qk = if k == 0 { 1.0 } else { cur };
            acc += ck * qk;
            if k >= 1 && k < coeffs.len() - 1 {
                let next = (t * cur - self.c[k] * prev) / self.c[k + 1];
                prev = cur;
                cur = next;
            }
        }
        acc
    }

    /// Coefficients of `q_k` in the monomial basis (`out[m]` multiplies
    /// `t^m`; length `k + 1`), from the same recurrence applied to
    /// coefficient vectors.
    pub fn monomial_coefficients(&self, k: usize) -> Result<Vec<f64>> {
        self.check_degree(k)?;
        let mut prev = vec![1.0];
        if k == 0 {
            return Ok(prev);
        }
        let mut cur = vec![0.0, 1.0];
        for j in 1..k {
            let mut next = vec![0.0; j + 2];
            for (m, &cm) in cur.iter().enumerate() {
                next[m + 1] += cm;
            }
            for (m, &pm) in prev.iter().enumerate() {
                next[m] -= self.c[j] * pm;
            }
            for v in next.iter_mut() {
                *v /= self.c[j + 1];
            }
            prev = cur;
            cur = next;
        }
        Ok(cur)
    }
}

// ---------------------------------------------------------------------------
// Hermite polynomials (orthonormal, standard normal weight)
// ---------------------------------------------------------------------------

/// Orthonormal probabilist Hermite polynomial `he_k(x) = He_k(x)/sqrt(k!)`:
/// `E[he_j he_k] = delta_{jk}` under the standard normal.
pub fn hermite_eval(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let jf = j as f64;
        let next = (x * cur - jf.sqrt() * prev) / (jf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

// ---------------------------------------------------------------------------
// Gaussian quadrature (Golub-Welsch)
// ---------------------------------------------------------------------------

/// Gauss quadrature rule for `tau_{d,1}` with `n` nodes: exact for
/// polynomials of degree `<= 2n - 1`.  Nodes lie in `(-sqrt(d), sqrt(d))`,
/// weights sum to 1.
pub fn gauss_gegenbauer(d: usize, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!(
            "gauss_gegenbauer requires d >= 2, got {d}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("quadrature needs n >= 1".into()));
    }
    // Jacobi weight (1-u^2)^a on [-1,1] with a = (d-3)/2; recurrence
    // beta_j = j (j + 2a) / ((2j + 2a + 1)(2j + 2a - 1)) for the
    // normalized measure, then rescale nodes by sqrt(d).
    let a = (d as f64 - 3.0) / 2.0;
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n)
        .map(|j| {
            let jf = j as f64;
            (jf * (jf + 2.0 * a) / ((2.0 * jf + 2.0 * a + 1.0) * (2.0 * jf + 2.0 * a - 1.0)))
                .sqrt()
        })
        .collect();
    let (mut nodes, firsts) = linalg::tridiag_eigh_first_components(&diag, &offdiag)?;
    let scale = (d as f64).sqrt();
    for t in nodes.iter_mut() {
        *t *= scale;
    }
    let weights = firsts.iter().map(|v| v * v).collect();
    Ok((nodes, weights))
}

/// Gauss-Hermite rule for the standard normal with `n` nodes; weights
/// sum to 1, exact for polynomials of degree `<= 2n - 1`.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("quadrature needs n >= 1".into()));
    }
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n).map(|j| (j as f64).sqrt()).collect();
    let (nodes, firsts) = linalg::tridiag_eigh_first_components(&diag, &offdiag)?;
    let weights = firsts.iter().map(|v| v * v).collect();
    Ok((nodes, weights))
}

// ---------------------------------------------------------------------------
// Sphere sampling
// ---------------------------------------------------------------------------

/// Draw `count` points uniform on the radius-`radius` sphere in `R^d`
/// using the given RNG: normalized standard Gaussian rows.  Returns a
/// `count x d` matrix, one point per row.
pub fn sample_sphere_with(
    rng: &mut impl Rng,
    d: usize,
    radius: f64,
    count: usize,
) -> Result<linalg::Mat> {
    if d == 0 {
        return Err(Error::InvalidParameter("sphere dimension d = 0".into()));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sphere radius must be positive and finite, got {radius}"
        )));
    }
    let mut m = linalg::Mat::zeros(count, d);
    let mut row = vec![0.0; d];
    for i in 0..count {
        loop {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-8 {
                let s = radius / norm;
                for (j, &v) in row.iter().enumerate() {
                    m[(i, j)] = v * s;
                }
                break;
            }
        }
    }
    Ok(m)
}

/// Seeded wrapper around [`sample_sphere_with`]: the same `(d, radius,
/// count, seed)` always produces the same matrix.
pub fn sample_sphere(d: usize, radius: f64, count: usize, seed: u64) -> Result<linalg::Mat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_sphere_with(&mut rng, d, radius, count)
}

// ---------------------------------------------------------------------------
// Addition theorem spot check
// ---------------------------------------------------------------------------

/// Result of a Monte Carlo check of the addition theorem.
#[derive(Debug, Clone, Copy)]
pub struct AdditionCheck {
    /// Monte Carlo estimate of `E_x[q_k(<x,w>) q_k(<x,w'>)]`.
    pub mc_estimate: f64,
    /// Standard error of the estimate.
    pub mc_stderr: f64,
    /// Exact value `q_k(sqrt(d) <w,w'>) / sqrt(N_k)`.
    pub exact: f64,
}

/// Verify `E_x[q_k(<x,w>) q_k(<x,w'>)] = q_k(sqrt(d) w.w') / sqrt(N_k)`
/// for unit vectors `w, w'` by direct sampling of `x` on the sphere.
pub fn addition_theorem_check(
    d: usize,
    k: usize,
    w: &[f64],
    w_prime: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<AdditionCheck> {
    if w.len() != d || w_prime.len() != d {
        return Err(Error::InvalidParameter(format!(
            "direction vectors must have length d = {d}"
        )));
    }
    for (name, v) in [("w", w), ("w'", w_prime)] {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "{name} must be a unit vector (|norm - 1| = {:.2e})",
                (norm - 1.0).abs()
            )));
        }
    }
    if mc_samples < 2 {
        return Err(Error::InvalidParameter(
            "addition theorem check needs at least 2 samples".into(),
        ));
    }
    let basis = GegenbauerBasis::new(d, k)?;
    let nk = subspace_dim(d, k)? as f64;
    let dot: f64 = w.iter().zip(w_prime).map(|(a, b)| a * b).sum();
    let scale = (d as f64).sqrt();
    let exact = basis.eval(k, (scale * dot).clamp(-scale, scale))? / nk.sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = sample_sphere_with(&mut rng, d, scale, mc_samples)?;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for i in 0..mc_samples {
        let (mut tw, mut twp) = (0.0, 0.0);
        for j in 0..d {
            tw += x[(i, j)] * w[j];
            twp += x[(i, j)] * w_prime[j];
        }
        let prod = basis.eval(k, tw.clamp(-scale, scale))?
            * basis.eval(k, twp.clamp(-scale, scale))?;
        sum += prod;
        sum_sq += prod * prod;
    }
    let nf = mc_samples as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0) / (nf - 1.0);
    Ok(AdditionCheck {
        mc_estimate: mean,
        mc_stderr: var.sqrt(),
        exact,
    })
}
