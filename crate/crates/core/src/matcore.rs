//! Small dense matrix kernels with explicit tolerances.
//!
//! Everything downstream works with matrices of order at most a few dozen
//! (d·T for the process laws, 2·d·T for joint coupling covariances), so the
//! kernels here favour simplicity and verifiable tolerance contracts over
//! asymptotic speed: Cholesky with a relative pivot threshold, one-sided
//! Jacobi SVD, cyclic Jacobi symmetric eigendecomposition, and triangular
//! solves. All operations are pure functions on immutable inputs.
//!
//! Sign and ordering conventions, relied on throughout the crate:
//! * Cholesky factors are lower triangular with strictly positive diagonal
//!   (the unique such factor).
//! * Singular values are non-negative and sorted in descending order; signs
//!   are absorbed into `U`, so `X = U S V^T` with `S >= 0`.
//! * `sym_eig` returns eigenvalues in ascending order.
//!
//! The scalar map `f_lambda` is the unique maximizer of
//! `x -> 2 s x + (lambda/2) log(1 - x^2)` over `(-1, 1)`; it is evaluated in
//! the cancellation-free form `sign(s) / (sqrt(c^2 + 1) + c)` with
//! `c = lambda / (4 |s|)`, which is stable for all `s != 0` and tends to
//! `2 s / lambda` as `s -> 0`.

use crate::error::{AwError, Result};

/// Relative pivot threshold for Cholesky: a pivot is treated as zero when it
/// is at most this multiple of the largest diagonal entry. Below it the
/// matrix is rejected as degenerate (degenerate laws are out of scope and
/// their Cholesky factor would not be unique).
pub const SPD_PIVOT_REL_TOL: f64 = 1e-10;

/// Relative symmetry tolerance for [`SpdMat`]: `|a_ij - a_ji|` may not exceed
/// this multiple of the largest absolute entry.
pub const SYMMETRY_REL_TOL: f64 = 1e-12;

/// Jacobi sweeps stop once every column pair is orthogonal to this relative
/// tolerance; well below the 1e-10 reconstruction contract.
pub const JACOBI_REL_TOL: f64 = 1e-14;

/// Sweep budget for the Jacobi kernels. Convergence is quadratic once sweeps
/// settle; small matrices need fewer than ten sweeps, so hitting this budget
/// indicates non-finite input or a bug.
pub const JACOBI_MAX_SWEEPS: usize = 64;

/// Singular values at or below this multiple of the largest singular value
/// are treated as exact zeros when orthonormalizing `U` (their directions are
/// completed by Gram-Schmidt instead of normalizing a noise vector).
pub const SV_NEGLIGIBLE_REL_TOL: f64 = 1e-13;

/// Dense row-major matrix of `f64`, the workhorse type of the crate.
///
/// Invariants: all entries finite, `rows * cols == data.len()`. Constructors
/// check both; arithmetic preserves them (inputs finite and small implies
/// outputs finite at these orders).
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(AwError::DimensionMismatch {
                context: format!("{}x{} matrix needs {} entries, got {}", rows, cols, rows * cols, data.len()),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(AwError::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(AwError::DimensionMismatch { context: "ragged rows".into() });
        }
        Mat::new(r, c, rows.iter().flatten().copied().collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Diagonal matrix from the given entries.
    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Mat::zeros(n, n);
        for (i, &x) in entries.iter().enumerate() {
            m.data[i * n + i] = x;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = value;
    }

    /// Row-major view of the entries.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(AwError::DimensionMismatch {
                context: format!("cannot multiply {}x{} by {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            });
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.data[i * self.cols + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += aik * rhs.data[k * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * factor).collect() }
    }

    fn zip_with(&self, rhs: &Mat, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(AwError::DimensionMismatch {
                context: format!("{}x{} vs {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            });
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Largest absolute entry (the max norm used in tolerance contracts).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self.data[i * self.cols + i]).sum()
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(AwError::DimensionMismatch {
                context: format!("{}x{} matrix times vector of length {}", self.rows, self.cols, x.len()),
            });
        }
        Ok((0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.data[i * self.cols + j] * x[j]).sum())
            .collect())
    }

    /// Copies the `d x d` block at block position `(s, t)` (0-based).
    pub fn block(&self, s: usize, t: usize, d: usize) -> Result<Mat> {
        if (s + 1) * d > self.rows || (t + 1) * d > self.cols {
            return Err(AwError::IndexOutOfRange {
                context: format!(
                    "block ({}, {}) of size {} exceeds {}x{}",
                    s, t, d, self.rows, self.cols
                ),
            });
        }
        self.submatrix(s * d, (s + 1) * d, t * d, (t + 1) * d)
    }

    /// Copies the leading `s*d x t*d` submatrix (top-left `s` row blocks by
    /// `t` column blocks).
    pub fn leading_block(&self, s: usize, t: usize, d: usize) -> Result<Mat> {
        if s * d > self.rows || t * d > self.cols {
            return Err(AwError::IndexOutOfRange {
                context: format!(
                    "leading block {}x{} blocks of size {} exceeds {}x{}",
                    s, t, d, self.rows, self.cols
                ),
            });
        }
        self.submatrix(0, s * d, 0, t * d)
    }

    /// Copies rows `r0..r1` and columns `c0..c1`.
    pub fn submatrix(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Result<Mat> {
        if r1 > self.rows || c1 > self.cols || r0 > r1 || c0 > c1 {
            return Err(AwError::IndexOutOfRange {
                context: format!("rows {}..{} cols {}..{} of {}x{}", r0, r1, c0, c1, self.rows, self.cols),
            });
        }
        let mut out = Mat::zeros(r1 - r0, c1 - c0);
        for i in r0..r1 {
            for j in c0..c1 {
                out.data[(i - r0) * (c1 - c0) + (j - c0)] = self.data[i * self.cols + j];
            }
        }
        Ok(out)
    }

    /// Writes `block` into this matrix with its top-left corner at `(r0, c0)`.
    pub fn set_submatrix(&mut self, r0: usize, c0: usize, block: &Mat) -> Result<()> {
        if r0 + block.rows > self.rows || c0 + block.cols > self.cols {
            return Err(AwError::IndexOutOfRange {
                context: format!(
                    "{}x{} block at ({}, {}) exceeds {}x{}",
                    block.rows, block.cols, r0, c0, self.rows, self.cols
                ),
            });
        }
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.data[(r0 + i) * self.cols + (c0 + j)] = block.data[i * block.cols + j];
            }
        }
        Ok(())
    }

    /// Nested-row copy of the entries, handy for serialization.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec())
            .collect()
    }
}

/// Symmetric positive definite matrix, validated at construction.
///
/// Construction checks symmetry to [`SYMMETRY_REL_TOL`] (relative to the
/// largest absolute entry) and runs a trial Cholesky with the
/// [`SPD_PIVOT_REL_TOL`] pivot threshold, so holders of an `SpdMat` may rely
/// on the factorization succeeding.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMat {
    mat: Mat,
}

impl SpdMat {
    pub fn new(mat: Mat) -> Result<Self> {
        Self::with_tolerances(mat, SYMMETRY_REL_TOL, SPD_PIVOT_REL_TOL)
    }

    /// Constructor with explicit symmetry and pivot tolerances, for callers
    /// that need to relax or tighten the defaults.
    pub fn with_tolerances(mat: Mat, symmetry_rel_tol: f64, pivot_rel_tol: f64) -> Result<Self> {
        if !mat.is_square() {
            return Err(AwError::DimensionMismatch {
                context: format!("SpdMat requires a square matrix, got {}x{}", mat.rows(), mat.cols()),
            });
        }
        let scale = mat.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..mat.rows() {
            for j in (i + 1)..mat.cols() {
                let skew = (mat.get(i, j) - mat.get(j, i)).abs();
                if skew > symmetry_rel_tol * scale {
                    return Err(AwError::InvalidInput(format!(
                        "matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {skew:.3e}"
                    )));
                }
            }
        }
        chol_raw(&mat, pivot_rel_tol)?;
        Ok(SpdMat { mat })
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j)
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }
}

/// Lower Cholesky factor of a validated SPD matrix. Infallible because the
/// `SpdMat` constructor already ran the same factorization.
pub fn cholesky(a: &SpdMat) -> Mat {
    chol_raw(a.mat(), SPD_PIVOT_REL_TOL).expect("SpdMat invariant guarantees a Cholesky factor")
}

/// Cholesky on a raw matrix: lower triangular `L` with positive diagonal and
/// `L L^T = A`. Fails with `NotPositiveDefinite` when a pivot drops to or
/// below `pivot_rel_tol` times the largest diagonal entry.
pub fn chol_raw(a: &Mat, pivot_rel_tol: f64) -> Result<Mat> {
    if !a.is_square() {
        return Err(AwError::DimensionMismatch {
            context: format!("Cholesky requires a square matrix, got {}x{}", a.rows(), a.cols()),
        });
    }
    let n = a.rows();
    let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max(a.get(i, i).abs()));
    let floor = pivot_rel_tol * max_diag;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut pivot = a.get(j, j);
        for k in 0..j {
            pivot -= l.get(j, k) * l.get(j, k);
        }
        if pivot <= floor || !pivot.is_finite() {
            return Err(AwError::NotPositiveDefinite { index: j, pivot });
        }
        let ljj = pivot.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L` by forward substitution.
pub fn solve_lower(l: &Mat, b: &Mat) -> Result<Mat> {
    let n = l.rows();
    if !l.is_square() || b.rows() != n {
        return Err(AwError::DimensionMismatch {
            context: format!("triangular solve: {}x{} vs {}x{}", l.rows(), l.cols(), b.rows(), b.cols()),
        });
    }
    let mut x = b.clone();
    for j in 0..b.cols() {
        for i in 0..n {
            let mut s = x.get(i, j);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, j);
            }
            let d = l.get(i, i);
            if d == 0.0 {
                return Err(AwError::NumericalFailure("zero diagonal in triangular solve".into()));
            }
            x.set(i, j, s / d);
        }
    }
    Ok(x)
}

/// Solves `U X = B` for upper-triangular `U` by back substitution.
pub fn solve_upper(u: &Mat, b: &Mat) -> Result<Mat> {
    let n = u.rows();
    if !u.is_square() || b.rows() != n {
        return Err(AwError::DimensionMismatch {
            context: format!("triangular solve: {}x{} vs {}x{}", u.rows(), u.cols(), b.rows(), b.cols()),
        });
    }
    let mut x = b.clone();
    for j in 0..b.cols() {
        for i in (0..n).rev() {
            let mut s = x.get(i, j);
            for k in (i + 1)..n {
                s -= u.get(i, k) * x.get(k, j);
            }
            let d = u.get(i, i);
            if d == 0.0 {
                return Err(AwError::NumericalFailure("zero diagonal in triangular solve".into()));
            }
            x.set(i, j, s / d);
        }
    }
    Ok(x)
}

/// Singular value decomposition `X = U S V^T` of a square matrix.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    /// Singular values, non-negative, descending.
    pub s: Vec<f64>,
    pub v: Mat,
}

impl Svd {
    /// The singular values as a diagonal matrix.
    pub fn s_mat(&self) -> Mat {
        Mat::diag(&self.s)
    }
}

/// One-sided Jacobi SVD of a square matrix.
///
/// Rotations from the right orthogonalize the columns of a working copy `W`
/// (accumulated into `V`); afterwards the column norms are the singular
/// values and the normalized columns form `U`. Signs land in `U`, singular
/// values are sorted descending, and columns whose singular value is
/// negligible relative to the largest are replaced by a Gram-Schmidt
/// completion so `U` stays orthogonal even for rank-deficient input
/// (`svd(0) = (I, 0, I)`).
pub fn svd(x: &Mat) -> Result<Svd> {
    if !x.is_square() {
        return Err(AwError::DimensionMismatch {
            context: format!("svd requires a square matrix, got {}x{}", x.rows(), x.cols()),
        });
    }
    let n = x.rows();
    if n == 0 {
        return Ok(Svd { u: Mat::zeros(0, 0), s: vec![], v: Mat::zeros(0, 0) });
    }
    let mut w = x.clone();
    let mut v = Mat::identity(n);
    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..n {
                    let wip = w.get(i, p);
                    let wiq = w.get(i, q);
                    app += wip * wip;
                    aqq += wiq * wiq;
                    apq += wip * wiq;
                }
                if apq.abs() <= JACOBI_REL_TOL * (app * aqq).sqrt() || app == 0.0 || aqq == 0.0 {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let wip = w.get(i, p);
                    let wiq = w.get(i, q);
                    w.set(i, p, c * wip - s * wiq);
                    w.set(i, q, s * wip + c * wiq);
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(AwError::NumericalFailure(format!(
            "one-sided Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| w.get(i, j) * w.get(i, j)).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite norms"));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let s_max = s.first().copied().unwrap_or(0.0);
    let threshold = SV_NEGLIGIBLE_REL_TOL * s_max;

    let mut u = Mat::zeros(n, n);
    let mut v_sorted = Mat::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        for i in 0..n {
            v_sorted.set(i, k, v.get(i, j));
        }
        if s[k] > threshold {
            for i in 0..n {
                u.set(i, k, w.get(i, j) / s[k]);
            }
        }
    }
    complete_orthonormal(&mut u, &s, threshold);
    Ok(Svd { u, s, v: v_sorted })
}

/// Fills columns of `u` whose singular value is at or below `threshold` with
/// unit vectors orthogonal to all other columns (modified Gram-Schmidt over
/// the standard basis). Keeps `U` exactly orthonormal for rank-deficient
/// input; for the zero matrix this yields the identity.
fn complete_orthonormal(u: &mut Mat, s: &[f64], threshold: f64) {
    let n = u.rows();
    for k in 0..n {
        if s[k] > threshold {
            continue;
        }
        let mut filled = false;
        for seed in 0..n {
            let mut cand = vec![0.0; n];
            cand[seed] = 1.0;
            // Two passes of modified Gram-Schmidt for numerical safety.
            // Pending columns after k are still zero, so projecting against
            // them is a harmless no-op.
            for _ in 0..2 {
                for j in 0..n {
                    if j == k {
                        continue;
                    }
                    let dot: f64 = (0..n).map(|i| cand[i] * u.get(i, j)).sum();
                    for i in 0..n {
                        cand[i] -= dot * u.get(i, j);
                    }
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                for i in 0..n {
                    u.set(i, k, cand[i] / norm);
                }
                filled = true;
                break;
            }
        }
        debug_assert!(filled, "Gram-Schmidt completion must succeed for some basis vector");
    }
}

/// Largest singular value. Accepts rectangular input; computed from the
/// eigenvalues of the smaller Gram matrix when the input is not square.
pub fn spectral_norm(x: &Mat) -> Result<f64> {
    if x.rows() == 0 || x.cols() == 0 {
        return Ok(0.0);
    }
    if x.is_square() {
        return Ok(svd(x)?.s[0]);
    }
    let gram = if x.rows() >= x.cols() {
        x.transpose().matmul(x)?
    } else {
        x.matmul(&x.transpose())?
    };
    let (eigs, _) = sym_eig(&gram)?;
    Ok(eigs.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues ascending, Q)` with `A = Q diag(eigenvalues) Q^T`
/// and `Q` orthogonal. Input is symmetrized (`(A + A^T)/2`) before
/// iterating, so slightly asymmetric products from upstream arithmetic are
/// accepted.
pub fn sym_eig(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    if !a.is_square() {
        return Err(AwError::DimensionMismatch {
            context: format!("sym_eig requires a square matrix, got {}x{}", a.rows(), a.cols()),
        });
    }
    let n = a.rows();
    if n == 0 {
        return Ok((vec![], Mat::zeros(0, 0)));
    }
    let mut m = a.add(&a.transpose())?.scale(0.5);
    let mut q = Mat::identity(n);
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0_f64;
        for p in 0..n.saturating_sub(1) {
            for q_idx in (p + 1)..n {
                off = off.max(m.get(p, q_idx).abs());
            }
        }
        if off <= JACOBI_REL_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for r in (p + 1)..n {
                let apq = m.get(p, r);
                if apq.abs() <= JACOBI_REL_TOL * scale * 1e-2 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(r, r);
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // Two-sided rotation on rows/columns p and r.
                for i in 0..n {
                    let mip = m.get(i, p);
                    let mir = m.get(i, r);
                    m.set(i, p, c * mip - s * mir);
                    m.set(i, r, s * mip + c * mir);
                }
                for i in 0..n {
                    let mpi = m.get(p, i);
                    let mri = m.get(r, i);
                    m.set(p, i, c * mpi - s * mri);
                    m.set(r, i, s * mpi + c * mri);
                }
                for i in 0..n {
                    let qip = q.get(i, p);
                    let qir = q.get(i, r);
                    q.set(i, p, c * qip - s * qir);
                    q.set(i, r, s * qip + c * qir);
                }
            }
        }
    }
    if !converged {
        return Err(AwError::NumericalFailure(format!(
            "Jacobi eigendecomposition did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&a, &b| diag[a].partial_cmp(&diag[b]).expect("finite eigenvalues"));
    let eigs: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut q_sorted = Mat::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        for i in 0..n {
            q_sorted.set(i, k, q.get(i, j));
        }
    }
    Ok((eigs, q_sorted))
}

/// Spectral power of a symmetric positive semidefinite matrix:
/// `Q diag(max(eig, 0)^p) Q^T`. Used for matrix square roots (`p = 0.5`) and
/// inverse square roots (`p = -0.5`); tiny negative eigenvalues from rounding
/// are clamped to zero first. For negative powers all eigenvalues must stay
/// strictly positive.
pub fn sym_pow(a: &Mat, p: f64) -> Result<Mat> {
    let (eigs, q) = sym_eig(a)?;
    let powered: Vec<f64> = eigs
        .iter()
        .map(|&e| {
            let e = e.max(0.0);
            if e == 0.0 && p < 0.0 {
                f64::NAN
            } else {
                e.powf(p)
            }
        })
        .collect();
    if powered.iter().any(|x| !x.is_finite()) {
        return Err(AwError::NumericalFailure(
            "negative matrix power of a singular matrix".into(),
        ));
    }
    let n = a.rows();
    let mut scaled = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            scaled.set(i, j, q.get(i, j) * powered[j]);
        }
    }
    scaled.matmul(&q.transpose())
}

/// The scalar optimizer map: `f_lambda(s)` maximizes
/// `2 s x + (lambda/2) log(1 - x^2)` over `x` in `(-1, 1)`.
///
/// `lambda = 0` degenerates to `sign(s)` with the convention `sign(0) = 0`;
/// for `lambda > 0` the cancellation-free form
/// `sign(s) / (sqrt(c^2 + 1) + c)`, `c = lambda / (4|s|)`, is exact for all
/// `s != 0` and behaves like `2 s / lambda` near zero.
pub fn f_lambda(s: f64, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0, "lambda must be non-negative");
    if s == 0.0 {
        return 0.0;
    }
    if lambda == 0.0 {
        return s.signum();
    }
    let c = lambda / (4.0 * s.abs());
    s.signum() / ((c * c + 1.0).sqrt() + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
    }

    fn random_mat(rng: &mut StdRng, n: usize) -> Mat {
        Mat::new(n, n, (0..n * n).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap()
    }

    fn random_spd(rng: &mut StdRng, n: usize) -> SpdMat {
        let g = random_mat(rng, n);
        let a = g.matmul(&g.transpose()).unwrap().add(&Mat::identity(n).scale(0.5)).unwrap();
        SpdMat::new(a).unwrap()
    }

    /// Power iteration, used as an independent check on spectral_norm.
    fn power_iteration_norm(x: &Mat, iters: usize) -> f64 {
        let gram = x.transpose().matmul(x).unwrap();
        let n = gram.rows();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lam = 0.0;
        for _ in 0..iters {
            let w = gram.matvec(&v).unwrap();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v = w.iter().map(|x| x / norm).collect();
            lam = norm;
        }
        lam.sqrt()
    }

    #[test]
    fn cholesky_two_step_factor() {
        let a = SpdMat::new(Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 5.0]]).unwrap()).unwrap();
        let l = cholesky(&a);
        assert_eq!(l.to_rows(), vec![vec![1.0, 0.0], vec![2.0, 1.0]]);
    }

    #[test]
    fn cholesky_identity() {
        let a = SpdMat::new(Mat::identity(4)).unwrap();
        assert_eq!(cholesky(&a), Mat::identity(4));
    }

    #[test]
    fn cholesky_negative_offdiagonal_factor() {
        let a =
            SpdMat::new(Mat::from_rows(&[vec![1.0, -0.5], vec![-0.5, 1.25]]).unwrap()).unwrap();
        let l = cholesky(&a);
        assert_eq!(l.to_rows(), vec![vec![1.0, 0.0], vec![-0.5, 1.0]]);
    }

    #[test]
    fn cholesky_rejects_singular() {
        // Rank-one matrix: second pivot is exactly zero.
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        match chol_raw(&a, SPD_PIVOT_REL_TOL) {
            Err(AwError::NotPositiveDefinite { index: 1, .. }) => {}
            other => panic!("expected NotPositiveDefinite at index 1, got {other:?}"),
        }
        assert!(SpdMat::new(a).is_err());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_rows(&[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        assert!(matches!(chol_raw(&a, SPD_PIVOT_REL_TOL), Err(AwError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn cholesky_random_reconstruction() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=16);
            let a = random_spd(&mut rng, n);
            let l = cholesky(&a);
            let rebuilt = l.matmul(&l.transpose()).unwrap();
            let err = rebuilt.sub(a.mat()).unwrap().max_abs();
            assert!(err <= 1e-10 * a.mat().max_abs().max(1.0), "reconstruction error {err}");
            for i in 0..n {
                assert!(l.get(i, i) > 0.0);
                for j in (i + 1)..n {
                    assert_eq!(l.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn spd_rejects_asymmetric() {
        let a = Mat::from_rows(&[vec![1.0, 0.1], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(SpdMat::new(a), Err(AwError::InvalidInput(_))));
    }

    #[test]
    fn svd_of_rotation_has_unit_singular_values() {
        let r = 2.0_f64.sqrt() / 10.0;
        let x = Mat::from_rows(&[vec![7.0 * r, -r], vec![r, 7.0 * r]]).unwrap();
        let svd = svd(&x).unwrap();
        assert_close(svd.s[0], 1.0, 1e-12);
        assert_close(svd.s[1], 1.0, 1e-12);
        let rebuilt = svd.u.matmul(&svd.s_mat()).unwrap().matmul(&svd.v.transpose()).unwrap();
        assert!(rebuilt.sub(&x).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn svd_of_zero_matrix() {
        let svd = svd(&Mat::zeros(3, 3)).unwrap();
        assert_eq!(svd.s, vec![0.0, 0.0, 0.0]);
        assert_eq!(svd.u, Mat::identity(3));
        assert_eq!(svd.v, Mat::identity(3));
    }

    #[test]
    fn svd_frozen_values_for_skew_product() {
        // Singular values of [[0, -0.5], [2, 1]]: eigenvalues of X X^T are
        // (21 +- sqrt(377)) / 8; frozen from that characteristic polynomial.
        let x = Mat::from_rows(&[vec![0.0, -0.5], vec![2.0, 1.0]]).unwrap();
        let svd = svd(&x).unwrap();
        assert_close(svd.s[0], 2.247_679_020_649_623_5, 1e-12);
        assert_close(svd.s[1], 0.444_903_382_917_628_7, 1e-12);
        // Cross-checks: product of singular values = |det X| = 1 exactly,
        // sum of squares = Frobenius norm squared = 5.25.
        assert_close(svd.s[0] * svd.s[1], 1.0, 1e-12);
        assert_close(svd.s[0] * svd.s[0] + svd.s[1] * svd.s[1], 5.25, 1e-12);
    }

    #[test]
    fn svd_signs_land_in_u() {
        let x = Mat::from_rows(&[vec![-3.0]]).unwrap();
        let svd = svd(&x).unwrap();
        assert_eq!(svd.s, vec![3.0]);
        assert_eq!(svd.u.get(0, 0), -1.0);
        assert_eq!(svd.v.get(0, 0), 1.0);
    }

    #[test]
    fn svd_random_contracts() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..=8);
            let x = random_mat(&mut rng, n);
            let dec = svd(&x).unwrap();
            let scale = 1.0 + x.max_abs();
            let rebuilt = dec.u.matmul(&dec.s_mat()).unwrap().matmul(&dec.v.transpose()).unwrap();
            assert!(rebuilt.sub(&x).unwrap().max_abs() <= 1e-10 * scale);
            let u_err = dec.u.transpose().matmul(&dec.u).unwrap().sub(&Mat::identity(n)).unwrap().max_abs();
            let v_err = dec.v.transpose().matmul(&dec.v).unwrap().sub(&Mat::identity(n)).unwrap().max_abs();
            assert!(u_err <= 1e-10 && v_err <= 1e-10, "orthogonality {u_err} {v_err}");
            for k in 0..n {
                assert!(dec.s[k] >= 0.0);
                if k + 1 < n {
                    assert!(dec.s[k] >= dec.s[k + 1]);
                }
            }
        }
    }

    #[test]
    fn svd_rank_deficient_keeps_u_orthogonal() {
        // Rank-one 3x3 matrix.
        let x = Mat::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![2.0, 4.0, 6.0],
            vec![-1.0, -2.0, -3.0],
        ])
        .unwrap();
        let dec = svd(&x).unwrap();
        assert!(dec.s[1] <= 1e-12 && dec.s[2] <= 1e-12);
        let u_err =
            dec.u.transpose().matmul(&dec.u).unwrap().sub(&Mat::identity(3)).unwrap().max_abs();
        assert!(u_err <= 1e-12);
        let rebuilt = dec.u.matmul(&dec.s_mat()).unwrap().matmul(&dec.v.transpose()).unwrap();
        assert!(rebuilt.sub(&x).unwrap().max_abs() <= 1e-10 * x.max_abs());
    }

    #[test]
    fn spectral_norm_diagonal() {
        let x = Mat::diag(&[0.5, -0.9]);
        assert_close(spectral_norm(&x).unwrap(), 0.9, 1e-14);
        assert_close(spectral_norm(&Mat::identity(5)).unwrap(), 1.0, 1e-14);
    }

    #[test]
    fn spectral_norm_shear() {
        // [[1,0],[2,1]]: X^T X = [[5,2],[2,1]] with largest eigenvalue
        // 3 + 2*sqrt(2), so the norm is 1 + sqrt(2).
        let x = Mat::from_rows(&[vec![1.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let expected = 1.0 + 2.0_f64.sqrt();
        assert_close(spectral_norm(&x).unwrap(), expected, 1e-12);
        assert_close(power_iteration_norm(&x, 400), expected, 1e-9);
    }

    #[test]
    fn spectral_norm_matches_power_iteration() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.gen_range(1..=6);
            let x = random_mat(&mut rng, n);
            let a = spectral_norm(&x).unwrap();
            let b = power_iteration_norm(&x, 2000);
            assert_close(a, b, 1e-7 * (1.0 + a));
        }
    }

    #[test]
    fn spectral_norm_rectangular() {
        let x = Mat::new(1, 3, vec![3.0, 0.0, 4.0]).unwrap();
        assert_close(spectral_norm(&x).unwrap(), 5.0, 1e-12);
    }

    #[test]
    fn f_lambda_reference_points() {
        assert_eq!(f_lambda(2.0, 0.0), 1.0);
        assert_eq!(f_lambda(-2.0, 0.0), -1.0);
        assert_eq!(f_lambda(0.0, 0.0), 0.0);
        assert_eq!(f_lambda(0.0, 7.0), 0.0);
        // c = 1 at (s, lambda) = (1, 4): value sqrt(2) - 1.
        assert_close(f_lambda(1.0, 4.0), 2.0_f64.sqrt() - 1.0, 1e-15);
    }

    #[test]
    fn f_lambda_is_odd_and_bounded() {
        for &lambda in &[0.0, 0.3, 2.0, 50.0] {
            for i in -40..=40 {
                let x = i as f64 * 0.25;
                let f = f_lambda(x, lambda);
                assert_eq!(f, -f_lambda(-x, lambda), "odd symmetry at {x}");
                assert!(f.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn f_lambda_monotone_for_positive_lambda() {
        let lambda = 1.3;
        let mut prev = f_lambda(-20.0, lambda);
        let mut x = -20.0;
        while x < 20.0 {
            x += 0.05;
            let f = f_lambda(x, lambda);
            assert!(f > prev, "not increasing at {x}");
            prev = f;
        }
    }

    #[test]
    fn f_lambda_small_lambda_limit() {
        // |f_lambda(x) - sign(x)| <= lambda / (2|x|), from the large-c expansion.
        for &x in &[0.1, 0.5, 1.0, 3.0, -0.2, -7.0] {
            for &lambda in &[1e-3, 1e-2, 0.1] {
                let gap = (f_lambda(x, lambda) - x.signum()).abs();
                assert!(gap <= lambda / (2.0 * x.abs()) + 1e-15, "gap {gap} at x={x} lambda={lambda}");
            }
        }
    }

    #[test]
    fn f_lambda_matches_grid_argmax() {
        // Independent oracle: dense-grid maximization of the defining
        // objective 2 s x + (lambda/2) log(1 - x^2).
        for &(s, lambda) in &[(0.3, 0.5), (1.0, 4.0), (2.5, 0.5), (-1.2, 2.0)] {
            let m = 200_001;
            let mut best_x = 0.0;
            let mut best_val = f64::NEG_INFINITY;
            for k in 0..m {
                let x = -1.0 + 2.0 * (k as f64 + 0.5) / m as f64;
                let val = 2.0 * s * x + lambda / 2.0 * (1.0 - x * x).ln();
                if val > best_val {
                    best_val = val;
                    best_x = x;
                }
            }
            assert_close(f_lambda(s, lambda), best_x, 2.0 / m as f64 + 1e-9);
        }
    }

    #[test]
    fn f_lambda_tiny_argument_is_linear() {
        let lambda = 3.0;
        for &x in &[1e-8, 1e-12, -1e-10] {
            assert_close(f_lambda(x, lambda), 2.0 * x / lambda, 1e-20);
        }
    }

    #[test]
    fn block_extraction() {
        let eye4 = Mat::identity(4);
        assert_eq!(eye4.block(0, 0, 2).unwrap(), Mat::identity(2));
        assert_eq!(eye4.block(1, 0, 2).unwrap(), Mat::zeros(2, 2));

        // Leading 2x2 block of a block-triangular 4x4 factor is the identity.
        let mut l = Mat::identity(4);
        l.set(2, 0, 0.3);
        l.set(3, 1, -0.7);
        assert_eq!(l.leading_block(1, 1, 2).unwrap(), Mat::identity(2));

        let n = Mat::from_rows(&[vec![0.0, -0.5], vec![2.0, 1.0]]).unwrap();
        assert_eq!(n.block(1, 1, 1).unwrap().to_rows(), vec![vec![1.0]]);

        assert!(matches!(eye4.block(2, 0, 2), Err(AwError::IndexOutOfRange { .. })));
        assert!(matches!(eye4.leading_block(3, 1, 2), Err(AwError::IndexOutOfRange { .. })));
    }

    #[test]
    fn triangular_solves_invert_cholesky() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..=8);
            let a = random_spd(&mut rng, n);
            let l = cholesky(&a);
            let b = random_mat(&mut rng, n);
            let x = solve_lower(&l, &b).unwrap();
            assert!(l.matmul(&x).unwrap().sub(&b).unwrap().max_abs() <= 1e-9 * (1.0 + b.max_abs()));
            let y = solve_upper(&l.transpose(), &b).unwrap();
            assert!(
                l.transpose().matmul(&y).unwrap().sub(&b).unwrap().max_abs()
                    <= 1e-9 * (1.0 + b.max_abs())
            );
        }
    }

    #[test]
    fn sym_eig_known_matrix() {
        // [[5,2],[2,1]] has eigenvalues 3 -+ 2 sqrt(2).
        let a = Mat::from_rows(&[vec![5.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let (eigs, q) = sym_eig(&a).unwrap();
        let r2 = 2.0_f64.sqrt();
        assert_close(eigs[0], 3.0 - 2.0 * r2, 1e-12);
        assert_close(eigs[1], 3.0 + 2.0 * r2, 1e-12);
        let rebuilt = q.matmul(&Mat::diag(&eigs)).unwrap().matmul(&q.transpose()).unwrap();
        assert!(rebuilt.sub(&a).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn sym_eig_random_reconstruction() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.gen_range(1..=10);
            let g = random_mat(&mut rng, n);
            let a = g.add(&g.transpose()).unwrap().scale(0.5);
            let (eigs, q) = sym_eig(&a).unwrap();
            let rebuilt = q.matmul(&Mat::diag(&eigs)).unwrap().matmul(&q.transpose()).unwrap();
            assert!(rebuilt.sub(&a).unwrap().max_abs() <= 1e-10 * (1.0 + a.max_abs()));
            for k in 0..n.saturating_sub(1) {
                assert!(eigs[k] <= eigs[k + 1]);
            }
        }
    }

    #[test]
    fn sym_pow_square_root() {
        let mut rng = StdRng::seed_from_u64(29);
        let a = random_spd(&mut rng, 5);
        let half = sym_pow(a.mat(), 0.5).unwrap();
        let rebuilt = half.matmul(&half).unwrap();
        assert!(rebuilt.sub(a.mat()).unwrap().max_abs() <= 1e-9 * a.mat().max_abs());
        let inv_half = sym_pow(a.mat(), -0.5).unwrap();
        let prod = half.matmul(&inv_half).unwrap();
        assert!(prod.sub(&Mat::identity(5)).unwrap().max_abs() <= 1e-9);
    }

    #[test]
    fn sym_pow_rejects_singular_inverse() {
        let a = Mat::diag(&[1.0, 0.0]);
        assert!(sym_pow(&a, -0.5).is_err());
    }

    #[test]
    fn matmul_shapes_checked() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(AwError::DimensionMismatch { .. })));
        assert!(a.matmul(&b.transpose()).is_ok());
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(Mat::new(2, 2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(Mat::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Mat::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
