//! Tiled dense matrix products for square row-major buffers.
//!
//! The loop order is block-of-rows outer, `k` middle, full-row axpy inner, so
//! the right operand streams once per row block and the output block stays in
//! cache. Row blocks are distributed with rayon; each output row is summed in
//! a fixed order, so results do not depend on the thread count.

use rayon::prelude::*;

use crate::scalar::Scalar;

/// Rows per block; 32 rows of n=2048 f64 is 512 KiB of output per task.
const ROW_BLOCK: usize = 32;
/// Below this dimension the serial path avoids rayon overhead.
const PAR_MIN_DIM: usize = 192;

/// `C = A · B`, all n×n row-major.
pub fn mat_mul<F: Scalar>(a: &[F], b: &[F], n: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * n);
    let mut c = vec![F::zero(); n * n];
    let body = |(bi, c_block): (usize, &mut [F])| {
        let row0 = bi * ROW_BLOCK;
        let rows = c_block.len() / n;
        for k in 0..n {
            let b_row = &b[k * n..(k + 1) * n];
            for r in 0..rows {
                let coeff = a[(row0 + r) * n + k];
                if coeff != F::zero() {
                    super::axpy(coeff, b_row, &mut c_block[r * n..(r + 1) * n]);
                }
            }
        }
    };
    if n >= PAR_MIN_DIM {
        c.par_chunks_mut(ROW_BLOCK * n).enumerate().for_each(body);
    } else {
        c.chunks_mut(ROW_BLOCK * n).enumerate().for_each(body);
    }
    c
}

/// `C = A^T · B`, all n×n row-major.
pub fn mat_mul_at_b<F: Scalar>(a: &[F], b: &[F], n: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * n);
    let mut c = vec![F::zero(); n * n];
    let body = |(bi, c_block): (usize, &mut [F])| {
        let row0 = bi * ROW_BLOCK;
        let rows = c_block.len() / n;
        for k in 0..n {
            let b_row = &b[k * n..(k + 1) * n];
            let a_row = &a[k * n..(k + 1) * n];
            for r in 0..rows {
                let coeff = a_row[row0 + r];
                if coeff != F::zero() {
                    super::axpy(coeff, b_row, &mut c_block[r * n..(r + 1) * n]);
                }
            }
        }
    };
    if n >= PAR_MIN_DIM {
        c.par_chunks_mut(ROW_BLOCK * n).enumerate().for_each(body);
    } else {
        c.chunks_mut(ROW_BLOCK * n).enumerate().for_each(body);
    }
    c
}

/// `C = A · B^T`, all n×n row-major (row-by-row dot products).
pub fn mat_mul_a_bt<F: Scalar>(a: &[F], b: &[F], n: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * n);
    let mut c = vec![F::zero(); n * n];
    let body = |(i, c_row): (usize, &mut [F])| {
        let a_row = &a[i * n..(i + 1) * n];
        for (j, out) in c_row.iter_mut().enumerate() {
            *out = super::dot(a_row, &b[j * n..(j + 1) * n]);
        }
    };
    if n >= PAR_MIN_DIM {
        c.par_chunks_mut(n).enumerate().for_each(body);
    } else {
        c.chunks_mut(n).enumerate().for_each(body);
    }
    c
}

/// Symmetric Gram matrix `C = M M^T` for a rectangular `rows`×`k` row-major
/// `M`; only the lower triangle is computed and mirrored.
pub fn gram<F: Scalar>(m: &[F], rows: usize, k: usize) -> Vec<F> {
    debug_assert_eq!(m.len(), rows * k);
    let mut c = vec![F::zero(); rows * rows];
    let body = |(i, c_row): (usize, &mut [F])| {
        let mi = &m[i * k..(i + 1) * k];
        for (j, out) in c_row.iter_mut().enumerate().take(i + 1) {
            *out = super::dot(mi, &m[j * k..(j + 1) * k]);
        }
    };
    if rows >= PAR_MIN_DIM {
        c.par_chunks_mut(rows).enumerate().for_each(body);
    } else {
        c.chunks_mut(rows).enumerate().for_each(body);
    }
    for i in 0..rows {
        for j in i + 1..rows {
            c[i * rows + j] = c[j * rows + i];
        }
    }
    c
}

/// Rows of `m` scaled by the matching entry of `scales`.
pub fn row_scaled<F: Scalar>(m: &[F], scales: &[F], n: usize) -> Vec<F> {
    debug_assert_eq!(m.len(), n * n);
    debug_assert_eq!(scales.len(), n);
    let mut out = Vec::with_capacity(n * n);
    for (row, &s) in m.chunks_exact(n).zip(scales) {
        out.extend(row.iter().map(|&v| v * s));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_mul(a: &[f64], b: &[f64], n: usize, ta: bool, tb: bool) -> Vec<f64> {
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    let av = if ta { a[k * n + i] } else { a[i * n + k] };
                    let bv = if tb { b[j * n + k] } else { b[k * n + j] };
                    acc += av * bv;
                }
                c[i * n + j] = acc;
            }
        }
        c
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn products_match_naive_loops() {
        let n = 37;
        let a: Vec<f64> = (0..n * n).map(|i| ((i * 37 + 11) % 19) as f64 - 9.0).collect();
        let b: Vec<f64> = (0..n * n).map(|i| ((i * 53 + 3) % 23) as f64 - 11.0).collect();
        assert!(close(&mat_mul(&a, &b, n), &naive_mul(&a, &b, n, false, false), 1e-9));
        assert!(close(&mat_mul_at_b(&a, &b, n), &naive_mul(&a, &b, n, true, false), 1e-9));
        assert!(close(&mat_mul_a_bt(&a, &b, n), &naive_mul(&a, &b, n, false, true), 1e-9));
    }

    #[test]
    fn parallel_path_matches_serial_result() {
        let n = 200;
        let a: Vec<f64> = (0..n * n).map(|i| (i % 101) as f64 / 101.0 - 0.5).collect();
        let b: Vec<f64> = (0..n * n).map(|i| (i % 97) as f64 / 97.0 - 0.5).collect();
        let c = mat_mul(&a, &b, n);
        let reference = naive_mul(&a, &b, n, false, false);
        assert!(close(&c, &reference, 1e-10));
    }
}
