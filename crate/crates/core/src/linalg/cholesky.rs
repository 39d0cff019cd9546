//! Blocked Cholesky factorization (`A = L L^T`, lower) with forward/backward
//! substitution, multi-RHS quadratic forms, and an inverse-power estimate of
//! the smallest eigenvalue.
//!
//! The factorization is right-looking with a fixed panel width; the trailing
//! update reads a private copy of the finished panel, which keeps the parallel
//! row updates free of aliasing and cache-friendly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{dot, DenseSymMatrix};

const PANEL: usize = 96;
const PAR_MIN_DIM: usize = 256;

/// Lower-triangular Cholesky factor of an SPD matrix.
///
/// Stored full row-major with the strict upper triangle zeroed.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<F> {
    dim: usize,
    l: Vec<F>,
}

impl<F: Scalar> CholeskyFactor<F> {
    /// Factorizes `a`; fails with `NotPositiveDefinite` on a non-positive
    /// pivot.
    pub fn new(a: &DenseSymMatrix<F>) -> Result<Self> {
        let n = a.dim();
        let mut l = a.entries().to_vec();
        // Zero the strict upper triangle; the factorization fills only the
        // lower part.
        for i in 0..n {
            for j in i + 1..n {
                l[i * n + j] = F::zero();
            }
        }

        let mut panel = vec![F::zero(); PANEL * n];
        let mut k0 = 0;
        while k0 < n {
            let k1 = (k0 + PANEL).min(n);
            let nb = k1 - k0;

            // Unblocked factorization of the diagonal block.
            for i in k0..k1 {
                for j in k0..=i {
                    let s = dot(&l[i * n + k0..i * n + j], &l[j * n + k0..j * n + j]);
                    let v = l[i * n + j] - s;
                    if i == j {
                        if v <= F::zero() || !v.is_finite() {
                            return Err(Error::NotPositiveDefinite(format!(
                                "pivot {v} at index {i}"
                            )));
                        }
                        l[i * n + i] = v.sqrt();
                    } else {
                        l[i * n + j] = v / l[j * n + j];
                    }
                }
            }
            if k1 == n {
                break;
            }

            // Panel solve: rows below the block against the block's lower
            // triangle, then the rank-nb trailing update. The finished panel
            // is copied out so trailing rows can be updated in parallel
            // without aliasing the reads.
            let diag_block: Vec<F> = (k0..k1).map(|r| &l[r * n..r * n + k1]).fold(
                Vec::with_capacity(nb * k1),
                |mut acc, row| {
                    acc.extend_from_slice(row);
                    acc
                },
            );
            let solve_row = |row: &mut [F]| {
                // row is the full row i of L; solve entries k0..k1.
                for j in 0..nb {
                    let dj = &diag_block[j * k1..j * k1 + k0 + j];
                    let s = dot(&row[k0..k0 + j], &dj[k0..]);
                    row[k0 + j] = (row[k0 + j] - s) / diag_block[j * k1 + k0 + j];
                }
            };
            if n - k1 >= PAR_MIN_DIM {
                l[k1 * n..].par_chunks_mut(n).for_each(solve_row);
            } else {
                l[k1 * n..].chunks_mut(n).for_each(solve_row);
            }

            let rows_below = n - k1;
            for (dst, src) in panel[..rows_below * nb]
                .chunks_mut(nb)
                .zip(l[k1 * n..].chunks(n))
            {
                dst.copy_from_slice(&src[k0..k1]);
            }
            let panel_ref = &panel[..rows_below * nb];
            let update_row = |(r, row): (usize, &mut [F])| {
                let pi = &panel_ref[r * nb..(r + 1) * nb];
                for j in 0..=r {
                    let pj = &panel_ref[j * nb..(j + 1) * nb];
                    row[k1 + j] -= dot(pi, pj);
                }
            };
            if rows_below >= PAR_MIN_DIM {
                l[k1 * n..]
                    .par_chunks_mut(n)
                    .enumerate()
                    .for_each(update_row);
            } else {
                l[k1 * n..].chunks_mut(n).enumerate().for_each(update_row);
            }

            k0 = k1;
        }

        Ok(Self { dim: n, l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves `A x = y` (forward then backward substitution).
    pub fn solve(&self, y: &[F]) -> Vec<F> {
        let mut x = y.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }

    /// `L z = b` in place.
    pub fn forward_in_place(&self, b: &mut [F]) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s = dot(row, &b[..i]);
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// `L^T x = b` in place (column-oriented so rows of `L` stream
    /// contiguously).
    pub fn backward_in_place(&self, b: &mut [F]) {
        let n = self.dim;
        for i in (0..n).rev() {
            let xi = b[i] / self.l[i * n + i];
            b[i] = xi;
            let row = &self.l[i * n..i * n + i];
            for (bj, &lij) in b[..i].iter_mut().zip(row) {
                *bj -= lij * xi;
            }
        }
    }

    /// `‖L^{-1} b‖²`, i.e. the quadratic form `b^T A^{-1} b`.
    pub fn quadratic_form_inv(&self, b: &[F]) -> F {
        let mut z = b.to_vec();
        self.forward_in_place(&mut z);
        dot(&z, &z)
    }

    /// Quadratic forms `u_k^T A^{-1} u_k` for many packed unit vectors
    /// (`dirs` is `count` rows of length `dim`). Parallel over directions.
    pub fn quadratic_forms_inv_multi(&self, dirs: &[F]) -> Vec<F> {
        let n = self.dim;
        debug_assert_eq!(dirs.len() % n, 0);
        let count = dirs.len() / n;
        let mut out = vec![F::zero(); count];
        if count >= 8 && n >= PAR_MIN_DIM {
            out.par_iter_mut()
                .zip(dirs.par_chunks(n))
                .for_each(|(o, d)| *o = self.quadratic_form_inv(d));
        } else {
            for (o, d) in out.iter_mut().zip(dirs.chunks(n)) {
                *o = self.quadratic_form_inv(d);
            }
        }
        out
    }

    /// Estimates the smallest eigenvalue of `A` by inverse power iteration
    /// reusing this factorization. Adequate for threshold checks; not an
    /// exact extremal eigenvalue.
    pub fn min_eigenvalue_estimate(&self, iters: usize) -> F {
        let n = self.dim;
        let mut v: Vec<F> = (0..n)
            .map(|i| F::c(1.0) + F::c(0.01) * F::from_usize_exact(i % 7))
            .collect();
        let norm = super::norm2(&v);
        v.iter_mut().for_each(|x| *x /= norm);
        let mut mu = F::zero();
        for _ in 0..iters.max(1) {
            let mut w = v.clone();
            self.forward_in_place(&mut w);
            self.backward_in_place(&mut w);
            let norm = super::norm2(&w);
            if norm <= F::zero() || !norm.is_finite() {
                return F::zero();
            }
            // Rayleigh quotient of A^{-1}: norm of w against previous v.
            mu = dot(&w, &v);
            w.iter_mut().for_each(|x| *x /= norm);
            v = w;
        }
        if mu <= F::zero() {
            F::zero()
        } else {
            mu.recip()
        }
    }

    /// The factor's diagonal (useful for log-determinants in tests).
    pub fn diag(&self) -> Vec<F> {
        (0..self.dim).map(|i| self.l[i * self.dim + i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_mul_a_bt;

    fn spd_from_factor(n: usize, seed: u64) -> DenseSymMatrix<f64> {
        // A = B B^T + n*I with pseudo-random B: SPD and well conditioned.
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let b: Vec<f64> = (0..n * n).map(|_| next()).collect();
        let mut g = mat_mul_a_bt(&b, &b, n);
        for i in 0..n {
            g[i * n + i] += n as f64;
        }
        DenseSymMatrix::symmetrized(n, g)
    }

    #[test]
    fn solves_identity() {
        let a = DenseSymMatrix::<f64>::identity(3);
        let x = CholeskyFactor::new(&a).unwrap().solve(&[1.0, 2.0, 3.0]);
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn round_trips_random_spd() {
        for &n in &[1usize, 2, 5, 17, 64, 97, 150, 300] {
            let a = spd_from_factor(n, n as u64);
            let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let y = a.matvec(&x_true);
            let x = CholeskyFactor::new(&a).unwrap().solve(&y);
            let err: f64 = x
                .iter()
                .zip(&x_true)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = x_true.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(err <= 1e-10 * scale.max(1.0), "n={n} err={err}");
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = DenseSymMatrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            CholeskyFactor::new(&a),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn quadratic_form_matches_solve() {
        let n = 40;
        let a = spd_from_factor(n, 7);
        let f = CholeskyFactor::new(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.11).cos()).collect();
        let x = f.solve(&b);
        let qf_direct: f64 = b.iter().zip(&x).map(|(bi, xi)| bi * xi).sum();
        let qf = f.quadratic_form_inv(&b);
        assert!((qf - qf_direct).abs() <= 1e-9 * qf_direct.abs());
    }

    #[test]
    fn min_eigenvalue_estimate_on_diagonal() {
        let a = DenseSymMatrix::<f64>::from_diag(&[4.0, 0.25, 9.0, 1.0]);
        let f = CholeskyFactor::new(&a).unwrap();
        let est = f.min_eigenvalue_estimate(30);
        assert!((est - 0.25).abs() < 1e-6, "est={est}");
    }
}
