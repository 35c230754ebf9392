//! Minimal dense linear algebra on top of the system BLAS/LAPACK.
//!
//! [`Mat`] is a column-major `f64` matrix — the native LAPACK layout, so
//! every FFI call below passes buffers through without copies or transpose
//! bookkeeping.  Only the routines this crate actually uses are bound.

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Matrix type
// ---------------------------------------------------------------------------

/// Column-major matrix: entry `(i, j)` lives at `data[i + j * nrows]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(nrows: usize, ncols: usize) -> Mat {
        Mat {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Mat {
        let mut m = Mat::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Build from a row-major slice of rows (convenient for literals).
    pub fn from_rows(rows: &[&[f64]]) -> Mat {
        let nrows = rows.len();
        let ncols = if nrows == 0 { 0 } else { rows[0].len() };
        Mat::from_fn(nrows, ncols, |i, j| rows[i][j])
    }

    pub fn identity(n: usize) -> Mat {
        Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.ncols).map(move |j| self[(i, j)])
    }

    pub fn transposed(&self) -> Mat {
        Mat::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    /// Frobenius-squared norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Add `shift` to each diagonal entry (square matrices).
    pub fn add_diagonal(&mut self, shift: f64) {
        debug_assert_eq!(self.nrows, self.ncols);
        for i in 0..self.nrows {
            self[(i, i)] += shift;
        }
    }

    fn lda(&self) -> i32 {
        self.nrows.max(1) as i32
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &self.data[i + j * self.nrows]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &mut self.data[i + j * self.nrows]
    }
}

// ---------------------------------------------------------------------------
// FFI declarations (Fortran calling convention: everything by pointer)
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
mod ffi {
    extern "C" {
        pub fn dgemm_(
            transa: *const u8,
            transb: *const u8,
            m: *const i32,
            n: *const i32,
            k: *const i32,
            alpha: *const f64,
            a: *const f64,
            lda: *const i32,
            b: *const f64,
            ldb: *const i32,
            beta: *const f64,
            c: *mut f64,
            ldc: *const i32,
        );
        pub fn dsyrk_(
            uplo: *const u8,
            trans: *const u8,
            n: *const i32,
            k: *const i32,
            alpha: *const f64,
            a: *const f64,
            lda: *const i32,
            beta: *const f64,
            c: *mut f64,
            ldc: *const i32,
        );
        pub fn dgemv_(
            trans: *const u8,
            m: *const i32,
            n: *const i32,
            alpha: *const f64,
            a: *const f64,
            lda: *const i32,
            x: *const f64,
            incx: *const i32,
            beta: *const f64,
            y: *mut f64,
            incy: *const i32,
        );
        pub fn dpotrf_(uplo: *const u8, n: *const i32, a: *mut f64, lda: *const i32, info: *mut i32);
        pub fn dpotrs_(
            uplo: *const u8,
            n: *const i32,
            nrhs: *const i32,
            a: *const f64,
            lda: *const i32,
            b: *mut f64,
            ldb: *const i32,
            info: *mut i32,
        );
        pub fn dpotri_(uplo: *const u8, n: *const i32, a: *mut f64, lda: *const i32, info: *mut i32);
        pub fn dsysv_(
            uplo: *const u8,
            n: *const i32,
            nrhs: *const i32,
            a: *mut f64,
            lda: *const i32,
            ipiv: *mut i32,
            b: *mut f64,
            ldb: *const i32,
            work: *mut f64,
            lwork: *const i32,
            info: *mut i32,
        );
        pub fn dsyevd_(
            jobz: *const u8,
            uplo: *const u8,
            n: *const i32,
            a: *mut f64,
            lda: *const i32,
            w: *mut f64,
            work: *mut f64,
            lwork: *const i32,
            iwork: *mut i32,
            liwork: *const i32,
            info: *mut i32,
        );
        pub fn dstev_(
            jobz: *const u8,
            n: *const i32,
            d: *mut f64,
            e: *mut f64,
            z: *mut f64,
            ldz: *const i32,
            work: *mut f64,
            info: *mut i32,
        );
        pub fn dpocon_(
            uplo: *const u8,
            n: *const i32,
            a: *const f64,
            lda: *const i32,
            anorm: *const f64,
            rcond: *mut f64,
            work: *mut f64,
            iwork: *mut i32,
            info: *mut i32,
        );
        pub fn dlansy_(
            norm: *const u8,
            uplo: *const u8,
            n: *const i32,
            a: *const f64,
            lda: *const i32,
            work: *mut f64,
        ) -> f64;
        pub fn openblas_set_num_threads(n: i32);
    }
}

/// Pin the BLAS thread count.  Called with 1 when trials are parallelized
/// at the rayon level so the two pools do not oversubscribe each other.
pub fn set_blas_threads(n: usize) {
    unsafe { ffi::openblas_set_num_threads(n.max(1) as i32) }
}

fn lapack_err(routine: &'static str, info: i32, detail: &str) -> Error {
    Error::Linalg {
        routine,
        info,
        detail: detail.to_string(),
    }
}

// ---------------------------------------------------------------------------
// BLAS level 2/3
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

impl Trans {
    fn byte(self) -> u8 {
        match self {
            Trans::No => b'N',
            Trans::Yes => b'T',
        }
    }
}

/// `C = alpha * op(A) * op(B) + beta * C`.
pub fn gemm(alpha: f64, a: &Mat, ta: Trans, b: &Mat, tb: Trans, beta: f64, c: &mut Mat) {
    let (m, ka) = match ta {
        Trans::No => (a.nrows, a.ncols),
        Trans::Yes => (a.ncols, a.nrows),
    };
    let (kb, n) = match tb {
        Trans::No => (b.nrows, b.ncols),
        Trans::Yes => (b.ncols, b.nrows),
    };
    assert_eq!(ka, kb, "gemm inner dimensions differ");
    assert_eq!((c.nrows, c.ncols), (m, n), "gemm output shape mismatch");
    let (m_, n_, k_) = (m as i32, n as i32, ka as i32);
    unsafe {
        ffi::dgemm_(
            &ta.byte(),
            &tb.byte(),
            &m_,
            &n_,
            &k_,
            &alpha,
            a.data.as_ptr(),
            &a.lda(),
            b.data.as_ptr(),
            &b.lda(),
            &beta,
            c.data.as_mut_ptr(),
            &c.lda(),
        );
    }
}

/// Allocating convenience: `op(A) * op(B)`.
pub fn matmul(a: &Mat, ta: Trans, b: &Mat, tb: Trans) -> Mat {
    let m = match ta {
        Trans::No => a.nrows,
        Trans::Yes => a.ncols,
    };
    let n = match tb {
        Trans::No => b.ncols,
        Trans::Yes => b.nrows,
    };
    let mut c = Mat::zeros(m, n);
    gemm(1.0, a, ta, b, tb, 0.0, &mut c);
    c
}

/// `y = alpha * op(A) * x + beta * y`.
pub fn gemv(alpha: f64, a: &Mat, ta: Trans, x: &[f64], beta: f64, y: &mut [f64]) {
    let (xlen, ylen) = match ta {
        Trans::No => (a.ncols, a.nrows),
        Trans::Yes => (a.nrows, a.ncols),
    };
    assert_eq!(x.len(), xlen, "gemv x length mismatch");
    assert_eq!(y.len(), ylen, "gemv y length mismatch");
    let (m_, n_) = (a.nrows as i32, a.ncols as i32);
    let one = 1i32;
    unsafe {
        ffi::dgemv_(
            &ta.byte(),
            &m_,
            &n_,
            &alpha,
            a.data.as_ptr(),
            &a.lda(),
            x.as_ptr(),
            &one,
            &beta,
            y.as_mut_ptr(),
            &one,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gram {
    /// `A * A^T` (n = nrows of A).
    AAt,
    /// `A^T * A` (n = ncols of A).
    AtA,
}

/// Symmetric rank-k product via `dsyrk` (half the flops of `dgemm`),
/// with the upper triangle mirrored in afterwards so the result is a
/// full symmetric matrix.
pub fn gram(alpha: f64, a: &Mat, kind: Gram) -> Mat {
    let (n, k, trans) = match kind {
        Gram::AAt => (a.nrows, a.ncols, b'N'),
        Gram::AtA => (a.ncols, a.nrows, b'T'),
    };
    let mut c = Mat::zeros(n, n);
    let (n_, k_) = (n as i32, k as i32);
    let beta = 0.0;
    unsafe {
        ffi::dsyrk_(
            &b'L',
            &trans,
            &n_,
            &k_,
            &alpha,
            a.data.as_ptr(),
            &a.lda(),
            &beta,
            c.data.as_mut_ptr(),
            &c.lda(),
        );
    }
    for j in 0..n {
        for i in (j + 1)..n {
            let v = c[(i, j)];
            c[(j, i)] = v;
        }
    }
    c
}

// ---------------------------------------------------------------------------
// Symmetric positive definite solves (Cholesky)
// ---------------------------------------------------------------------------

/// Cholesky factorization of a symmetric positive definite matrix
/// (lower triangle).  Produced by [`Cholesky::factor`]; the original
/// matrix is not stored — callers that want iterative refinement or a
/// condition estimate pass it back in.
#[derive(Debug, Clone)]
pub struct Cholesky {
    factor: Mat,
}

impl Cholesky {
    pub fn factor(a: &Mat) -> Result<Cholesky> {
        assert_eq!(a.nrows, a.ncols, "Cholesky needs a square matrix");
        let mut f = a.clone();
        let n = f.nrows as i32;
        let mut info = 0i32;
        unsafe {
            ffi::dpotrf_(&b'L', &n, f.data.as_mut_ptr(), &f.lda(), &mut info);
        }
        if info != 0 {
            return Err(lapack_err(
                "dpotrf",
                info,
                "matrix is not positive definite to working precision",
            ));
        }
        Ok(Cholesky { factor: f })
    }

    pub fn n(&self) -> usize {
        self.factor.nrows
    }

    /// Solve `A x = b` for one right-hand side.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n(), "rhs length mismatch");
        let mut x = b.to_vec();
        let n = self.n() as i32;
        let one = 1i32;
        let mut info = 0i32;
        unsafe {
            ffi::dpotrs_(
                &b'L',
                &n,
                &one,
                self.factor.data.as_ptr(),
                &self.factor.lda(),
                x.as_mut_ptr(),
                &n.max(1),
                &mut info,
            );
        }
        if info != 0 {
            return Err(lapack_err("dpotrs", info, "triangular solve failed"));
        }
        Ok(x)
    }

    /// Solve with one step of iterative refinement against the original
    /// matrix `a`: recovers most of the accuracy lost to a large condition
    /// number without touching the regularization.
    pub fn solve_refined(&self, a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.solve(b)?;
        // r = b - A x, dx = A^{-1} r, x += dx
        let mut r = b.to_vec();
        gemv(-1.0, a, Trans::No, &x, 1.0, &mut r);
        let dx = self.solve(&r)?;
        for (xi, di) in x.iter_mut().zip(dx.iter()) {
            *xi += di;
        }
        Ok(x)
    }

    /// Trace of `A^{-1}`, via the explicit inverse of the factor copy.
    pub fn inv_trace(&self) -> Result<f64> {
        let mut inv = self.factor.clone();
        let n = inv.nrows as i32;
        let mut info = 0i32;
        unsafe {
            ffi::dpotri_(&b'L', &n, inv.data.as_mut_ptr(), &inv.lda(), &mut info);
        }
        if info != 0 {
            return Err(lapack_err("dpotri", info, "inversion from factor failed"));
        }
        Ok((0..inv.nrows).map(|i| inv[(i, i)]).sum())
    }

    /// Reciprocal condition number estimate (1-norm) given the original
    /// matrix; ~0 means numerically singular, ~1 means well conditioned.
    pub fn rcond(&self, a: &Mat) -> Result<f64> {
        let n = self.n();
        let n_ = n as i32;
        let mut work = vec![0.0f64; 3 * n];
        let anorm = unsafe {
            ffi::dlansy_(
                &b'1',
                &b'L',
                &n_,
                a.data.as_ptr(),
                &a.lda(),
                work.as_mut_ptr(),
            )
        };
        let mut rcond = 0.0f64;
        let mut iwork = vec![0i32; n];
        let mut info = 0i32;
        unsafe {
            ffi::dpocon_(
                &b'L',
                &n_,
                self.factor.data.as_ptr(),
                &self.factor.lda(),
                &anorm,
                &mut rcond,
                work.as_mut_ptr(),
                iwork.as_mut_ptr(),
                &mut info,
            );
        }
        if info != 0 {
            return Err(lapack_err("dpocon", info, "condition estimate failed"));
        }
        Ok(rcond)
    }
}

/// Solve a symmetric (possibly indefinite) system via Bunch-Kaufman
/// (`dsysv`).  Fallback for matrices that fail Cholesky.
pub fn sym_solve_indef(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.nrows, a.ncols);
    assert_eq!(b.len(), a.nrows);
    let mut af = a.clone();
    let mut x = b.to_vec();
    let n = a.nrows as i32;
    let one = 1i32;
    let mut ipiv = vec![0i32; a.nrows];
    let mut info = 0i32;
    // workspace query
    let mut wkopt = 0.0f64;
    let neg = -1i32;
    unsafe {
        ffi::dsysv_(
            &b'L',
            &n,
            &one,
            af.data.as_mut_ptr(),
            &af.lda(),
            ipiv.as_mut_ptr(),
            x.as_mut_ptr(),
            &n.max(1),
            &mut wkopt,
            &neg,
            &mut info,
        );
    }
    if info != 0 {
        return Err(lapack_err("dsysv", info, "workspace query failed"));
    }
    let lwork = wkopt as i32;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    unsafe {
        ffi::dsysv_(
            &b'L',
            &n,
            &one,
            af.data.as_mut_ptr(),
            &af.lda(),
            ipiv.as_mut_ptr(),
            x.as_mut_ptr(),
            &n.max(1),
            work.as_mut_ptr(),
            &lwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(lapack_err("dsysv", info, "factorization failed (singular)"));
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Symmetric eigendecompositions
// ---------------------------------------------------------------------------

/// Full eigendecomposition of a symmetric matrix (`dsyevd`).  Returns
/// eigenvalues ascending and the orthonormal eigenvectors as columns.
pub fn sym_eigh(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    assert_eq!(a.nrows, a.ncols);
    let mut v = a.clone();
    let n = a.nrows;
    let n_ = n as i32;
    let mut w = vec![0.0f64; n];
    let mut info = 0i32;
    // workspace query
    let (mut wkopt, mut iwkopt) = (0.0f64, 0i32);
    let neg = -1i32;
    unsafe {
        ffi::dsyevd_(
            &b'V',
            &b'L',
            &n_,
            v.data.as_mut_ptr(),
            &v.lda(),
            w.as_mut_ptr(),
            &mut wkopt,
            &neg,
            &mut iwkopt,
            &neg,
            &mut info,
        );
    }
    if info != 0 {
        return Err(lapack_err("dsyevd", info, "workspace query failed"));
    }
    let lwork = wkopt as i32;
    let liwork = iwkopt;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        ffi::dsyevd_(
            &b'V',
            &b'L',
            &n_,
            v.data.as_mut_ptr(),
            &v.lda(),
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(lapack_err("dsyevd", info, "eigendecomposition failed"));
    }
    Ok((w, v))
}

/// Eigenvalues only of a symmetric matrix (`dsyevd` with JOBZ='N'),
/// ascending.  Several times cheaper than [`sym_eigh`] when the vectors
/// are not needed — the spectrum comparisons only want singular values.
pub fn sym_eigvals(a: &Mat) -> Result<Vec<f64>> {
    assert_eq!(a.nrows, a.ncols);
    let mut v = a.clone();
    let n = a.nrows;
    let n_ = n as i32;
    let mut w = vec![0.0f64; n];
    let mut info = 0i32;
    let (mut wkopt, mut iwkopt) = (0.0f64, 0i32);
    let neg = -1i32;
    unsafe {
        ffi::dsyevd_(
            &b'N',
            &b'L',
            &n_,
            v.data.as_mut_ptr(),
            &v.lda(),
            w.as_mut_ptr(),
            &mut wkopt,
            &neg,
            &mut iwkopt,
            &neg,
            &mut info,
        );
    }
    if info != 0 {
        return Err(lapack_err("dsyevd", info, "workspace query failed"));
    }
    let lwork = wkopt as i32;
    let liwork = iwkopt;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        ffi::dsyevd_(
            &b'N',
            &b'L',
            &n_,
            v.data.as_mut_ptr(),
            &v.lda(),
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(lapack_err("dsyevd", info, "eigenvalue computation failed"));
    }
    Ok(w)
}

/// Eigendecomposition of a symmetric tridiagonal matrix (`dstev`).
/// `diag` has length n, `offdiag` length n-1.  Returns eigenvalues
/// ascending plus the first component of each eigenvector — exactly what
/// Golub-Welsch quadrature needs.
pub fn tridiag_eigh_first_components(diag: &[f64], offdiag: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    assert_eq!(offdiag.len(), n.saturating_sub(1));
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    e.push(0.0); // LAPACK wants length >= n-1; keep a stable buffer
    let mut z = Mat::zeros(n, n);
    let n_ = n as i32;
    let mut work = vec![0.0f64; (2 * n).max(1)];
    let mut info = 0i32;
    unsafe {
        ffi::dstev_(
            &b'V',
            &n_,
            d.as_mut_ptr(),
            e.as_mut_ptr(),
            z.data.as_mut_ptr(),
            &z.lda(),
            work.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(lapack_err("dstev", info, "tridiagonal eigensolve failed"));
    }
    let firsts = (0..n).map(|j| z[(0, j)]).collect();
    Ok((d, firsts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        assert!(
            (a - b).abs() <= tol,
            "{what}: {a} vs {b} (diff {:.3e})",
            (a - b).abs()
        );
    }

    #[test]
    fn indexing_is_column_major() {
        let mut m = Mat::zeros(2, 3);
        m[(1, 2)] = 7.0;
        assert_eq!(m.data()[1 + 2 * 2], 7.0);
        assert_eq!(m.col(2), &[0.0, 7.0]);
    }

    #[test]
    fn gemm_matches_hand_product() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let b = Mat::from_rows(&[&[7.0, 8.0, 9.0], &[10.0, 11.0, 12.0]]);
        let c = matmul(&a, Trans::No, &b, Trans::No);
        let expect = Mat::from_rows(&[
            &[27.0, 30.0, 33.0],
            &[61.0, 68.0, 75.0],
            &[95.0, 106.0, 117.0],
        ]);
        assert_eq!(c, expect);

        // A^T * A via gemm vs dsyrk
        let g1 = matmul(&a, Trans::Yes, &a, Trans::No);
        let g2 = gram(1.0, &a, Gram::AtA);
        for j in 0..2 {
            for i in 0..2 {
                assert_close(g1[(i, j)], g2[(i, j)], 1e-12, "syrk vs gemm");
            }
        }
        let g3 = gram(2.0, &a, Gram::AAt);
        let g4 = matmul(&a, Trans::No, &a, Trans::Yes);
        for j in 0..3 {
            for i in 0..3 {
                assert_close(g3[(i, j)], 2.0 * g4[(i, j)], 1e-12, "syrk AAt");
            }
        }
    }

    #[test]
    fn gemv_both_orientations() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let mut y = vec![0.0; 3];
        gemv(1.0, &a, Trans::No, &[1.0, 1.0], 0.0, &mut y);
        assert_eq!(y, vec![3.0, 7.0, 11.0]);
        let mut z = vec![1.0, 1.0];
        gemv(2.0, &a, Trans::Yes, &[1.0, 0.0, 1.0], 3.0, &mut z);
        assert_eq!(z, vec![2.0 * 6.0 + 3.0, 2.0 * 8.0 + 3.0]);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // A = L L^T with known solution
        let a = Mat::from_rows(&[&[4.0, 2.0, 0.6], &[2.0, 5.0, 1.5], &[0.6, 1.5, 3.0]]);
        let x_true = [1.0, -2.0, 0.5];
        let mut b = vec![0.0; 3];
        gemv(1.0, &a, Trans::No, &x_true, 0.0, &mut b);
        let ch = Cholesky::factor(&a).unwrap();
        let x = ch.solve(&b).unwrap();
        for (xi, ti) in x.iter().zip(x_true.iter()) {
            assert_close(*xi, *ti, 1e-12, "cholesky solve");
        }
        let xr = ch.solve_refined(&a, &b).unwrap();
        for (xi, ti) in xr.iter().zip(x_true.iter()) {
            assert_close(*xi, *ti, 1e-13, "refined solve");
        }
        // trace of inverse vs explicit 3x3 inversion
        let det = 4.0 * (5.0 * 3.0 - 1.5 * 1.5) - 2.0 * (2.0 * 3.0 - 1.5 * 0.6)
            + 0.6 * (2.0 * 1.5 - 5.0 * 0.6);
        let tr_inv = ((5.0 * 3.0 - 1.5 * 1.5) + (4.0 * 3.0 - 0.6 * 0.6)
            + (4.0 * 5.0 - 2.0 * 2.0))
            / det;
        assert_close(ch.inv_trace().unwrap(), tr_inv, 1e-12, "inv trace");
        let rc = ch.rcond(&a).unwrap();
        assert!(rc > 0.05 && rc <= 1.0, "rcond sane: {rc}");
    }

    #[test]
    fn cholesky_rejects_indefinite_but_dsysv_handles_it() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]); // eigenvalues 3, -1
        assert!(matches!(
            Cholesky::factor(&a),
            Err(Error::Linalg { routine: "dpotrf", .. })
        ));
        let x = sym_solve_indef(&a, &[3.0, 0.0]).unwrap();
        // solution of [[1,2],[2,1]] x = [3,0] is x = [-1, 2]
        assert_close(x[0], -1.0, 1e-12, "dsysv x0");
        assert_close(x[1], 2.0, 1e-12, "dsysv x1");
    }

    #[test]
    fn sym_eigh_recovers_spectrum() {
        let a = Mat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let (w, v) = sym_eigh(&a).unwrap();
        assert_close(w[0], 1.0, 1e-12, "low eigenvalue");
        assert_close(w[1], 3.0, 1e-12, "high eigenvalue");
        // columns orthonormal
        let dot: f64 = v.col(0).iter().zip(v.col(1)).map(|(x, y)| x * y).sum();
        assert_close(dot, 0.0, 1e-12, "eigenvector orthogonality");
    }

    #[test]
    fn tridiag_gives_legendre_nodes() {
        // Jacobi matrix for Legendre: beta_j = j^2/(4j^2-1); n=2 nodes are
        // +/- 1/sqrt(3) and both weights (first components squared) are 1/2.
        let b1: f64 = 1.0 / 3.0;
        let (nodes, firsts) =
            tridiag_eigh_first_components(&[0.0, 0.0], &[b1.sqrt()]).unwrap();
        assert_close(nodes[0], -(1.0f64 / 3.0).sqrt(), 1e-14, "node 0");
        assert_close(nodes[1], (1.0f64 / 3.0).sqrt(), 1e-14, "node 1");
        assert_close(firsts[0] * firsts[0], 0.5, 1e-14, "weight 0");
        assert_close(firsts[1] * firsts[1], 0.5, 1e-14, "weight 1");
    }
}
