//! Dense symmetric linear algebra used by the whole pipeline: Cholesky
//! factorization and solves, symmetric eigendecomposition (Householder
//! tridiagonalization + implicit QL), SPD inverse square root, and condition
//! numbers of plain and preconditioned systems.
//!
//! Matrices are dense, row-major, and sized for desk-scale problems
//! (n up to a few thousand). All operations are pure functions of their
//! inputs; internal `rayon` parallelism keeps results bitwise deterministic
//! because every accumulation runs in a fixed order.

mod cholesky;
mod eigen;
mod gemm;

pub use cholesky::CholeskyFactor;
pub use gemm::{gram, mat_mul, mat_mul_a_bt, mat_mul_at_b};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative tolerance for the symmetry check at construction.
const SYMMETRY_RTOL: f64 = 1e-12;

/// A dense symmetric n×n matrix, stored full and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymMatrix<F> {
    dim: usize,
    data: Vec<F>,
}

impl<F: Scalar> DenseSymMatrix<F> {
    /// Validates shape, finiteness and symmetry of a row-major buffer.
    pub fn from_flat(dim: usize, data: Vec<F>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {}x{dim} entries, got {}",
                dim,
                data.len()
            )));
        }
        let m = Self { dim, data };
        m.validate()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_flat(dim, rows.concat())
    }

    /// Builds a symmetric matrix from `f(i, j)`, evaluated once per unordered
    /// pair and mirrored, so the result is symmetric by construction.
    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> F) -> Result<Self> {
        let mut data = vec![F::zero(); dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![F::one(); dim])
    }

    pub fn from_diag(d: &[F]) -> Self {
        let dim = d.len();
        let mut data = vec![F::zero(); dim * dim];
        for (i, &v) in d.iter().enumerate() {
            data[i * dim + i] = v;
        }
        Self { dim, data }
    }

    pub(crate) fn from_parts(dim: usize, data: Vec<F>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim;
        for i in 0..n {
            for j in 0..=i {
                let a = self.data[i * n + j];
                let b = self.data[j * n + i];
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                let scale = F::one().max(a.abs());
                if (a - b).abs() > F::c(SYMMETRY_RTOL) * scale {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        left: a.as_f64(),
                        right: b.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn entries(&self) -> &[F] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<F> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> F {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn fro_norm(&self) -> F {
        self.data.iter().map(|&v| v * v).sum::<F>().sqrt()
    }

    /// `self + c*I`, as a new matrix.
    pub fn add_scaled_identity(&self, c: F) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] += c;
        }
        out
    }

    pub fn scale(&self, c: F) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&v| v * c).collect(),
        }
    }

    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim];
        self.matvec_into(v, &mut out);
        out
    }

    pub fn matvec_into(&self, v: &[F], out: &mut [F]) {
        assert_eq!(v.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        let n = self.dim;
        if n >= 256 {
            use rayon::prelude::*;
            out.par_chunks_mut(64)
                .zip(self.data.par_chunks(64 * n))
                .for_each(|(outs, rows)| {
                    for (o, row) in outs.iter_mut().zip(rows.chunks_exact(n)) {
                        *o = dot(row, v);
                    }
                });
        } else {
            for (o, row) in out.iter_mut().zip(self.data.chunks_exact(n)) {
                *o = dot(row, v);
            }
        }
    }

    /// Symmetrizes tiny round-off asymmetry from matrix products that are
    /// symmetric in exact arithmetic.
    pub(crate) fn symmetrized(dim: usize, mut data: Vec<F>) -> Self {
        let half = F::c(0.5);
        for i in 0..dim {
            for j in 0..i {
                let m = (data[i * dim + j] + data[j * dim + i]) * half;
                data[i * dim + j] = m;
                data[j * dim + i] = m;
            }
        }
        Self { dim, data }
    }
}

/// Eigendecomposition of a symmetric matrix: `A = V diag(w) V^T`.
///
/// Eigenvalues are ascending; eigenvectors are stored as the *rows* of
/// `vectors_t` (so `eigenvector(j)` is a contiguous slice).
#[derive(Debug, Clone)]
pub struct EigenDecomposition<F> {
    dim: usize,
    eigenvalues: Vec<F>,
    vectors_t: Vec<F>,
}

impl<F: Scalar> EigenDecomposition<F> {
    pub(crate) fn new(dim: usize, eigenvalues: Vec<F>, vectors_t: Vec<F>) -> Self {
        Self {
            dim,
            eigenvalues,
            vectors_t,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> &[F] {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> F {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> F {
        self.eigenvalues[self.dim - 1]
    }

    /// Eigenvector for the j-th (ascending) eigenvalue.
    pub fn eigenvector(&self, j: usize) -> &[F] {
        &self.vectors_t[j * self.dim..(j + 1) * self.dim]
    }

    pub(crate) fn vectors_t(&self) -> &[F] {
        &self.vectors_t
    }

    /// `V diag(w) V^T`, for reconstruction checks.
    pub fn reconstruct(&self) -> DenseSymMatrix<F> {
        let scaled = gemm::row_scaled(&self.vectors_t, &self.eigenvalues, self.dim);
        let data = mat_mul_at_b(&self.vectors_t, &scaled, self.dim);
        DenseSymMatrix::symmetrized(self.dim, data)
    }

    /// `‖V^T V − I‖_F`, for orthonormality checks.
    pub fn orthonormality_defect(&self) -> F {
        let n = self.dim;
        let g = mat_mul_a_bt(&self.vectors_t, &self.vectors_t, n);
        let mut acc = F::zero();
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { F::one() } else { F::zero() };
                let d = g[i * n + j] - target;
                acc += d * d;
            }
        }
        acc.sqrt()
    }
}

/// Solves `A x = y` for SPD `A` via Cholesky factorization.
pub fn chol_solve<F: Scalar>(a: &DenseSymMatrix<F>, y: &[F]) -> Result<Vec<F>> {
    if y.len() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rhs length {} vs dim {}",
            y.len(),
            a.dim()
        )));
    }
    Ok(CholeskyFactor::new(a)?.solve(y))
}

/// Full symmetric eigendecomposition with eigenvectors.
pub fn sym_eig<F: Scalar>(a: &DenseSymMatrix<F>) -> Result<EigenDecomposition<F>> {
    eigen::decompose(a, true)
}

/// Eigenvalues only (ascending); cheaper than [`sym_eig`] when vectors are
/// not needed.
pub fn sym_eigenvalues<F: Scalar>(a: &DenseSymMatrix<F>) -> Result<Vec<F>> {
    Ok(eigen::decompose(a, false)?.eigenvalues)
}

/// Smallest eigenvalue below which an "SPD" matrix is rejected as numerically
/// singular, relative to the largest eigenvalue.
const INV_SQRT_FLOOR: f64 = 1e-14;

/// `S^{-1/2}` for SPD `S`, via the eigendecomposition.
pub fn spd_inv_sqrt<F: Scalar>(s: &DenseSymMatrix<F>) -> Result<DenseSymMatrix<F>> {
    Ok(spd_inv_sqrt_with_eig(s)?.0)
}

/// `S^{-1/2}` together with the eigendecomposition *of the result*, which
/// shares eigenvectors with `S` and has eigenvalues `w^{-1/2}` (re-sorted
/// ascending).
pub fn spd_inv_sqrt_with_eig<F: Scalar>(
    s: &DenseSymMatrix<F>,
) -> Result<(DenseSymMatrix<F>, EigenDecomposition<F>)> {
    let n = s.dim();
    let eig = sym_eig(s)?;
    let w_max = eig.max_eigenvalue();
    let w_min = eig.min_eigenvalue();
    if w_min <= F::c(INV_SQRT_FLOOR) * w_max || w_min <= F::zero() {
        return Err(Error::NotPositiveDefinite(format!(
            "min eigenvalue {w_min} below floor relative to max {w_max}"
        )));
    }
    let inv_sqrt: Vec<F> = eig.eigenvalues.iter().map(|&w| w.sqrt().recip()).collect();
    let scaled = gemm::row_scaled(&eig.vectors_t, &inv_sqrt, n);
    let p = DenseSymMatrix::symmetrized(n, mat_mul_at_b(&eig.vectors_t, &scaled, n));

    // Eigenvalues of S ascend, so w^{-1/2} descends: reverse to keep the
    // ascending convention.
    let mut values: Vec<F> = inv_sqrt;
    values.reverse();
    let mut vectors_t = vec![F::zero(); n * n];
    for j in 0..n {
        vectors_t[j * n..(j + 1) * n].copy_from_slice(eig.eigenvector(n - 1 - j));
    }
    Ok((p, EigenDecomposition::new(n, values, vectors_t)))
}

/// Condition number `λ_max / λ_min` of an SPD matrix.
pub fn condition_number_spd<F: Scalar>(a: &DenseSymMatrix<F>) -> Result<F> {
    let w = sym_eigenvalues(a)?;
    let (min, max) = (w[0], w[w.len() - 1]);
    if min <= F::zero() {
        return Err(Error::NotPositiveDefinite(format!(
            "min eigenvalue {min} <= 0"
        )));
    }
    Ok(max / min)
}

/// Condition number of the preconditioned system, evaluated on the symmetric
/// similarity form `P^{1/2} A P^{1/2}` (same eigenvalues as `P A`).
pub fn precond_condition_number<F: Scalar>(
    p: &DenseSymMatrix<F>,
    a: &DenseSymMatrix<F>,
) -> Result<F> {
    if p.dim() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "preconditioner dim {} vs system dim {}",
            p.dim(),
            a.dim()
        )));
    }
    let eig_p = sym_eig(p)?;
    precond_condition_number_from_eig(&eig_p, a)
}

/// Same as [`precond_condition_number`] but reusing a cached
/// eigendecomposition of `P`.
///
/// With `P = V diag(u) V^T` and `u > 0`, `P^{1/2} A P^{1/2}` is orthogonally
/// similar to `diag(√u) · (V^T A V) · diag(√u)`, so two dense products and a
/// scaling suffice.
pub fn precond_condition_number_from_eig<F: Scalar>(
    eig_p: &EigenDecomposition<F>,
    a: &DenseSymMatrix<F>,
) -> Result<F> {
    let n = a.dim();
    if eig_p.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "preconditioner dim {} vs system dim {}",
            eig_p.dim(),
            n
        )));
    }
    let u_min = eig_p.min_eigenvalue();
    if u_min <= F::zero() {
        return Err(Error::NotPositiveDefinite(format!(
            "preconditioner min eigenvalue {u_min} <= 0"
        )));
    }
    // B = M A M^T where M rows are P's eigenvectors.
    let t = mat_mul(eig_p.vectors_t(), a.entries(), n);
    let mut b = mat_mul_a_bt(&t, eig_p.vectors_t(), n);
    let sqrt_u: Vec<F> = eig_p.eigenvalues().iter().map(|&u| u.sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] = b[i * n + j] * sqrt_u[i] * sqrt_u[j];
        }
    }
    let sandwich = DenseSymMatrix::symmetrized(n, b);
    condition_number_spd(&sandwich)
}

/// [`precond_condition_number`] specialized to a diagonal preconditioner:
/// the symmetric form is just a row/column scaling of `A`.
pub fn precond_condition_number_diag<F: Scalar>(d: &[F], a: &DenseSymMatrix<F>) -> Result<F> {
    let n = a.dim();
    if d.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "diagonal length {} vs system dim {n}",
            d.len()
        )));
    }
    if d.iter().any(|&v| !(v > F::zero())) {
        return Err(Error::NotPositiveDefinite(
            "diagonal preconditioner must be positive".into(),
        ));
    }
    let sqrt_d: Vec<F> = d.iter().map(|&v| v.sqrt()).collect();
    let sandwich = DenseSymMatrix::from_fn(n, |i, j| sqrt_d[i] * a.get(i, j) * sqrt_d[j])?;
    condition_number_spd(&sandwich)
}

#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let mut acc0 = F::zero();
    let mut acc1 = F::zero();
    let mut acc2 = F::zero();
    let mut acc3 = F::zero();
    for k in 0..chunks {
        let i = 4 * k;
        acc0 += a[i] * b[i];
        acc1 += a[i + 1] * b[i + 1];
        acc2 += a[i + 2] * b[i + 2];
        acc3 += a[i + 3] * b[i + 3];
    }
    let mut acc = (acc0 + acc1) + (acc2 + acc3);
    for i in 4 * chunks..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

#[inline]
pub fn norm2<F: Scalar>(v: &[F]) -> F {
    dot(v, v).sqrt()
}

#[inline]
pub fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
