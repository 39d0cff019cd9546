//! Symmetric eigendecomposition: Householder reduction to tridiagonal form
//! followed by the implicit-shift QL iteration, with optional eigenvector
//! accumulation.
//!
//! The reduction keeps the shrinking active block fully symmetric so the
//! matrix-vector product in each step runs on contiguous rows, and the
//! accumulation matrix is kept transposed (rows are eigenvectors) so QL
//! rotations touch contiguous row pairs. Both choices only affect memory
//! layout, not the arithmetic.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{dot, DenseSymMatrix, EigenDecomposition};

/// QL iterations allowed per eigenvalue before giving up.
const QL_ITER_LIMIT: usize = 50;
const PAR_MIN_DIM: usize = 256;

pub fn decompose<F: Scalar>(
    a: &DenseSymMatrix<F>,
    with_vectors: bool,
) -> Result<EigenDecomposition<F>> {
    let n = a.dim();
    let mut work = a.entries().to_vec();
    let mut d = vec![F::zero(); n];
    let mut e = vec![F::zero(); n];
    let mut hs = vec![F::zero(); n];

    tridiagonalize(&mut work, n, &mut e, &mut hs);
    for i in 0..n {
        d[i] = work[i * n + i];
    }

    let mut qt = if with_vectors {
        let mut qt = vec![F::zero(); n * n];
        for i in 0..n {
            qt[i * n + i] = F::one();
        }
        accumulate(&work, n, &hs, &mut qt);
        qt
    } else {
        Vec::new()
    };

    // Re-index the off-diagonal so e[i] couples (i, i+1).
    let mut off = vec![F::zero(); n];
    for i in 0..n.saturating_sub(1) {
        off[i] = e[i + 1];
    }

    ql_implicit(&mut d, &mut off, if with_vectors { Some(&mut qt) } else { None }, n)?;

    // Sort ascending, permuting eigenvector rows along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let eigenvalues: Vec<F> = order.iter().map(|&i| d[i]).collect();
    let vectors_t = if with_vectors {
        let mut sorted = vec![F::zero(); n * n];
        for (dst, &src) in order.iter().enumerate() {
            sorted[dst * n..(dst + 1) * n].copy_from_slice(&qt[src * n..(src + 1) * n]);
        }
        sorted
    } else {
        Vec::new()
    };
    Ok(EigenDecomposition::new(n, eigenvalues, vectors_t))
}

/// Householder reduction. On return `work` holds the tridiagonal diagonal on
/// its diagonal, the (scaled) Householder vectors in its strict lower rows,
/// `e[i]` the coupling between rows `i-1` and `i`, and `hs[i]` the Householder
/// normalizer for step `i` (zero when the step was skipped).
fn tridiagonalize<F: Scalar>(work: &mut [F], n: usize, e: &mut [F], hs: &mut [F]) {
    let mut p = vec![F::zero(); n];
    let mut u_buf = vec![F::zero(); n];
    for i in (1..n).rev() {
        let m = i; // active prefix length of row i
        if m == 1 {
            e[i] = work[i * n];
            continue;
        }
        let scale: F = work[i * n..i * n + m].iter().map(|v| v.abs()).sum();
        if scale == F::zero() {
            e[i] = F::zero();
            continue;
        }
        let inv_scale = scale.recip();
        for k in 0..m {
            work[i * n + k] *= inv_scale;
        }
        let mut h: F = dot(&work[i * n..i * n + m], &work[i * n..i * n + m]);
        let f = work[i * n + m - 1];
        let g = if f >= F::zero() { -h.sqrt() } else { h.sqrt() };
        e[i] = scale * g;
        h -= f * g;
        work[i * n + m - 1] = f - g;
        hs[i] = h;
        u_buf[..m].copy_from_slice(&work[i * n..i * n + m]);
        let u = &u_buf[..m];

        // p = A_active · u / h, computed on contiguous full rows.
        {
            let head = &work[..i * n];
            let gemv = |(j, pj): (usize, &mut F)| {
                *pj = dot(&head[j * n..j * n + m], u) / h;
            };
            if m >= PAR_MIN_DIM {
                p[..m].par_iter_mut().enumerate().for_each(gemv);
            } else {
                p[..m].iter_mut().enumerate().for_each(gemv);
            }
        }

        // q = p − (u·p / 2h) u, then the symmetric rank-2 update
        // A ← A − u q^T − q u^T on the full active block.
        let upx: F = dot(&p[..m], u);
        let hh = upx / (h + h);
        for (pj, &uj) in p[..m].iter_mut().zip(u) {
            *pj -= hh * uj;
        }
        let q = &p[..m];
        let update = |(j, row): (usize, &mut [F])| {
            let uj = u[j];
            let qj = q[j];
            for ((rk, &qk), &uk) in row[..m].iter_mut().zip(q).zip(u) {
                *rk = *rk - uj * qk - qj * uk;
            }
        };
        let active = &mut work[..i * n];
        if m >= PAR_MIN_DIM {
            active.par_chunks_mut(n).enumerate().for_each(update);
        } else {
            active.chunks_mut(n).enumerate().for_each(update);
        }
    }
}

/// Accumulates the orthogonal reduction transform into `qt` (rows end up as
/// the columns of the classic accumulation matrix).
fn accumulate<F: Scalar>(work: &[F], n: usize, hs: &[F], qt: &mut [F]) {
    for i in 1..n {
        let h = hs[i];
        if h == F::zero() {
            continue;
        }
        let u = &work[i * n..i * n + i];
        let body = |row: &mut [F]| {
            let g = dot(u, &row[..i]) / h;
            for (rk, &uk) in row[..i].iter_mut().zip(u) {
                *rk -= g * uk;
            }
        };
        let (active, _) = qt.split_at_mut(i * n);
        if i >= PAR_MIN_DIM {
            active.par_chunks_mut(n).for_each(body);
        } else {
            active.chunks_mut(n).for_each(body);
        }
    }
}

/// Implicit-shift QL on a tridiagonal matrix, rotating eigenvector rows in
/// `qt` when present. `off[i]` couples entries `i` and `i+1`.
fn ql_implicit<F: Scalar>(
    d: &mut [F],
    off: &mut [F],
    mut qt: Option<&mut Vec<F>>,
    n: usize,
) -> Result<()> {
    if n == 1 {
        return Ok(());
    }
    let eps = F::epsilon();
    let mut total_iters = 0usize;
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if off[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            total_iters += 1;
            if iter > QL_ITER_LIMIT {
                return Err(Error::NoConvergence {
                    iterations: total_iters,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (F::c(2.0) * off[l]);
            let mut r = g.hypot(F::one());
            let denom = g + if g >= F::zero() { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + off[l] / denom;
            let mut s = F::one();
            let mut c = F::one();
            let mut p = F::zero();
            let mut broke = false;
            for i in (l..m).rev() {
                let mut f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == F::zero() {
                    d[i + 1] -= p;
                    off[m] = F::zero();
                    broke = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + F::c(2.0) * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(qt) = qt.as_deref_mut() {
                    let (lo, hi) = qt.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_i1 = &mut hi[..n];
                    for (zi, zi1) in row_i.iter_mut().zip(row_i1.iter_mut()) {
                        f = *zi1;
                        *zi1 = s * *zi + c * f;
                        *zi = c * *zi - s * f;
                    }
                }
            }
            if broke {
                continue;
            }
            d[l] -= p;
            off[l] = g;
            off[m] = F::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::linalg::{sym_eig, sym_eigenvalues, DenseSymMatrix};

    #[test]
    fn diagonal_matrix_sorted_ascending() {
        let a = DenseSymMatrix::<f64>::from_diag(&[3.0, 1.0, 2.0]);
        let eig = sym_eig(&a).unwrap();
        assert_eq!(eig.eigenvalues(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn known_two_by_two() {
        let a = DenseSymMatrix::<f64>::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert!((eig.eigenvalues()[0] + 1.0).abs() < 1e-14);
        assert!((eig.eigenvalues()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn values_only_matches_full() {
        let n = 23;
        let a = DenseSymMatrix::<f64>::from_fn(n, |i, j| {
            1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { 2.0 } else { 0.0 }
        })
        .unwrap();
        let full = sym_eig(&a).unwrap();
        let vals = sym_eigenvalues(&a).unwrap();
        for (x, y) in full.eigenvalues().iter().zip(&vals) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}
