//! Position embeddings and the exponential attention kernel.
//!
//! Measurement locations in the square working region are mapped through a
//! seeded random Fourier feature map to embeddings with row norm at most one,
//! and the kernel is `G_ij = exp(<e_i, e_j>)`. The map is pointwise (each row
//! depends only on its own position and the config), so training points and
//! query points embed consistently.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseSymMatrix};
use crate::rng::{self, streams};
use crate::scalar::Scalar;

/// Side length of the square working region, in meters.
pub const DOMAIN_SIZE: f64 = 100.0;

/// Measurement positions in the working region (2-D, meters).
#[derive(Debug, Clone)]
pub struct PositionSet<F> {
    points: Vec<[F; 2]>,
}

impl<F: Scalar> PositionSet<F> {
    pub fn new(points: Vec<[F; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("empty position set".into()));
        }
        let hi = F::c(DOMAIN_SIZE);
        for (i, p) in points.iter().enumerate() {
            if p.iter().any(|&c| !(c >= F::zero() && c <= hi)) {
                return Err(Error::InvalidConfig(format!(
                    "position {i} outside [0,{DOMAIN_SIZE}]^2"
                )));
            }
        }
        Ok(Self { points })
    }

    /// `n` positions drawn uniformly from the region.
    pub fn uniform(n: usize, rng: &mut rand_chacha::ChaCha12Rng) -> Self {
        let points = (0..n)
            .map(|_| {
                [
                    F::c(rng.gen_range(0.0..DOMAIN_SIZE)),
                    F::c(rng.gen_range(0.0..DOMAIN_SIZE)),
                ]
            })
            .collect();
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [F; 2] {
        self.points[i]
    }

    pub fn points(&self) -> &[[F; 2]] {
        &self.points
    }
}

/// Configuration of the position-to-embedding map.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingConfig<F> {
    /// Embedding dimension; must be even (sin/cos pairs).
    pub d_e: usize,
    pub seed: u64,
    /// Length scale of the Fourier frequencies, meters.
    pub length_scale: F,
    /// Calibration target for the mean pairwise affinity `<e_i, e_j>`.
    pub target_mean_affinity: F,
}

impl<F: Scalar> Default for EmbeddingConfig<F> {
    fn default() -> Self {
        Self {
            d_e: 10,
            seed: 0,
            length_scale: F::c(40.0),
            target_mean_affinity: F::c(0.35),
        }
    }
}

impl<F: Scalar> EmbeddingConfig<F> {
    fn validate(&self) -> Result<()> {
        if self.d_e < 2 {
            return Err(Error::InvalidConfig("d_e must be at least 2".into()));
        }
        if self.d_e % 2 != 0 {
            return Err(Error::InvalidConfig(
                "d_e must be even: the feature map pairs sin/cos".into(),
            ));
        }
        if !(self.length_scale > F::zero()) {
            return Err(Error::InvalidConfig("length_scale must be positive".into()));
        }
        let t = self.target_mean_affinity;
        if !(t > F::zero() && t < F::one()) {
            return Err(Error::InvalidConfig(
                "target_mean_affinity must lie in (0,1)".into(),
            ));
        }
        Ok(())
    }
}

/// Embedding rows for a set of positions, with the config that produced them.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix<F> {
    entries: Vec<F>,
    d_e: usize,
    config: EmbeddingConfig<F>,
}

impl<F: Scalar> EmbeddingMatrix<F> {
    /// Wraps raw embedding rows (used by tests and the worked example);
    /// enforces the row-norm cap and finiteness.
    pub fn from_rows(rows: &[Vec<F>], config: EmbeddingConfig<F>) -> Result<Self> {
        let d_e = config.d_e;
        if rows.is_empty() || rows.iter().any(|r| r.len() != d_e) {
            return Err(Error::DimensionMismatch(format!(
                "expected nonempty rows of length {d_e}"
            )));
        }
        let cap = F::one() + F::c(1e-12);
        for (i, r) in rows.iter().enumerate() {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i, col: 0 });
            }
            let norm: F = dot(r, r).sqrt();
            if norm > cap {
                return Err(Error::InvalidConfig(format!(
                    "embedding row {i} has norm {norm} > 1"
                )));
            }
        }
        Ok(Self {
            entries: rows.concat(),
            d_e,
            config,
        })
    }

    pub fn n(&self) -> usize {
        self.entries.len() / self.d_e
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.entries[i * self.d_e..(i + 1) * self.d_e]
    }

    pub fn config(&self) -> &EmbeddingConfig<F> {
        &self.config
    }

    pub fn max_row_norm(&self) -> F {
        (0..self.n())
            .map(|i| dot(self.row(i), self.row(i)).sqrt())
            .fold(F::zero(), |a, b| a.max(b))
    }
}

/// The frequencies, phases, and affine row calibration of the feature map.
/// Depends only on the config, never on the positions being embedded.
struct FourierMap<F> {
    freqs: Vec<[F; 2]>,
    phases: Vec<F>,
    d_e: usize,
    /// Row scaling of the unit-norm oscillatory part.
    s: F,
    /// Per-coordinate offset `m / sqrt(d_e)`.
    dc: F,
}

/// Fraction of the target affinity carried by the constant (rank-one)
/// component; the rest comes from the oscillatory features. Together with the
/// default target affinity this sets the near-rank-one kernel spectrum and
/// the kappa-vs-n slope at the default regularization.
const DC_AFFINITY_FRACTION: f64 = 0.8;
const PROBE_ROWS: usize = 16;
const PROBE_COLS: usize = 32;

impl<F: Scalar> FourierMap<F> {
    fn build(cfg: &EmbeddingConfig<F>) -> Result<Self> {
        cfg.validate()?;
        let pairs = cfg.d_e / 2;
        let mut r = rng::stream_rng(cfg.seed, streams::EMBEDDING);
        let inv_ell = cfg.length_scale.recip();
        let freqs: Vec<[F; 2]> = rng::standard_normals::<F>(&mut r, 2 * pairs)
            .chunks_exact(2)
            .map(|w| [w[0] * inv_ell, w[1] * inv_ell])
            .collect();
        let phases: Vec<F> = rng::uniforms(&mut r, 0.0, 2.0 * std::f64::consts::PI, pairs);

        let mut map = Self {
            freqs,
            phases,
            d_e: cfg.d_e,
            s: F::one(),
            dc: F::zero(),
        };
        map.calibrate(cfg)?;
        Ok(map)
    }

    /// Oscillatory feature vector of a single position; exactly unit norm
    /// because each sin/cos pair contributes `2/d_e`.
    fn phi_hat(&self, x: [F; 2]) -> Vec<F> {
        let scale = (F::c(2.0) / F::from_usize_exact(self.d_e)).sqrt();
        let mut out = Vec::with_capacity(self.d_e);
        for (w, &b) in self.freqs.iter().zip(&self.phases) {
            let angle = w[0] * x[0] + w[1] * x[1] + b;
            out.push(scale * angle.sin());
            out.push(scale * angle.cos());
        }
        out
    }

    fn embed_point(&self, x: [F; 2]) -> Vec<F> {
        let mut e = self.phi_hat(x);
        for v in e.iter_mut() {
            *v = self.s * *v + self.dc;
        }
        e
    }

    /// Solves for the affine row calibration `(s, m)` so the mean pairwise
    /// affinity over a fixed probe grid hits the target, subject to the hard
    /// row-norm cap `s + m <= 1`.
    fn calibrate(&mut self, cfg: &EmbeddingConfig<F>) -> Result<()> {
        let probe: Vec<Vec<F>> = (0..PROBE_ROWS)
            .flat_map(|i| (0..PROBE_COLS).map(move |j| (i, j)))
            .map(|(i, j)| {
                let x = [
                    F::c((i as f64 + 0.5) * DOMAIN_SIZE / PROBE_ROWS as f64),
                    F::c((j as f64 + 0.5) * DOMAIN_SIZE / PROBE_COLS as f64),
                ];
                self.phi_hat(x)
            })
            .collect();
        let p = probe.len();
        let sqrt_de = F::from_usize_exact(self.d_e).sqrt();

        // Mean pairwise cosine and mean DC overlap of the oscillatory part.
        let mut c_sum = F::zero();
        let mut h_sum = F::zero();
        for i in 0..p {
            let hi: F = probe[i].iter().copied().sum::<F>() / sqrt_de;
            h_sum += hi;
            for j in 0..i {
                c_sum += dot(&probe[i], &probe[j]);
            }
        }
        let pairs = F::from_usize_exact(p * (p - 1) / 2);
        let c_bar = c_sum / pairs;
        let h_bar = h_sum / F::from_usize_exact(p);

        let target = cfg.target_mean_affinity;
        let rhs = (F::one() - F::c(DC_AFFINITY_FRACTION)) * target;
        if c_bar <= F::c(1e-9) {
            return Err(Error::InvalidConfig(
                "probe affinities degenerate; cannot calibrate embedding scale".into(),
            ));
        }
        // Preferred split: the DC fraction of the affinity from m², the rest
        // from the oscillatory part.
        let mut m = (F::c(DC_AFFINITY_FRACTION) * target).sqrt();
        let disc = (m * h_bar) * (m * h_bar) + c_bar * rhs;
        let mut s = (-m * h_bar + disc.sqrt()) / c_bar;
        let cap = F::one() - F::c(1e-12);
        if s + m > cap {
            // Re-solve on the cap boundary: a(s, cap − s) = target is a
            // quadratic in s; the smaller root keeps the split as
            // DC-dominant as the cap allows.
            let two = F::c(2.0);
            let qa = c_bar - two * h_bar + F::one();
            let qb = two * cap * (h_bar - F::one());
            let qc = cap * cap - target;
            let disc = qb * qb - F::c(4.0) * qa * qc;
            if disc < F::zero() || qa <= F::zero() {
                return Err(Error::InvalidConfig(format!(
                    "target_mean_affinity {target} unreachable under the row-norm cap"
                )));
            }
            s = (-qb - disc.sqrt()) / (two * qa);
            m = cap - s;
            if s <= F::zero() || m <= F::zero() {
                return Err(Error::InvalidConfig(format!(
                    "target_mean_affinity {target} unreachable under the row-norm cap"
                )));
            }
        }
        let achieved = s * s * c_bar + F::c(2.0) * s * m * h_bar + m * m;
        debug_assert!((achieved - target).abs() <= F::c(0.02));
        self.s = s;
        self.dc = m / sqrt_de;
        Ok(())
    }
}

/// Embeds positions through the seeded Fourier map.
///
/// The map is pointwise and deterministic: row `i` depends only on `x_i` and
/// the config, identical positions give identical rows, and repeated calls
/// are bitwise identical.
pub fn embed_positions<F: Scalar>(
    x: &PositionSet<F>,
    cfg: &EmbeddingConfig<F>,
) -> Result<EmbeddingMatrix<F>> {
    let map = FourierMap::build(cfg)?;
    let mut entries = Vec::with_capacity(x.len() * cfg.d_e);
    for &p in x.points() {
        entries.extend(map.embed_point(p));
    }
    Ok(EmbeddingMatrix {
        entries,
        d_e: cfg.d_e,
        config: cfg.clone(),
    })
}

/// `G_ij = exp(<e_i, e_j>)`, dense and exactly symmetric (the dot product is
/// evaluated in the same order for both triangles).
pub fn attention_kernel<F: Scalar>(e: &EmbeddingMatrix<F>) -> DenseSymMatrix<F> {
    let n = e.n();
    let d = e.d_e();
    let rows = &e.entries;
    let mut data = vec![F::zero(); n * n];
    let body = |(i, out): (usize, &mut [F])| {
        let ei = &rows[i * d..(i + 1) * d];
        for (j, o) in out.iter_mut().enumerate() {
            let ej = &rows[j * d..(j + 1) * d];
            let (a, b) = if i <= j { (ei, ej) } else { (ej, ei) };
            *o = dot(a, b).exp();
        }
    };
    if n >= 256 {
        data.par_chunks_mut(n).enumerate().for_each(body);
    } else {
        data.chunks_mut(n).enumerate().for_each(body);
    }
    DenseSymMatrix::from_parts(n, data)
}

/// Kernel column between a query embedding and every training embedding.
pub fn cross_kernel<F: Scalar>(e_train: &EmbeddingMatrix<F>, e_query: &[F]) -> Result<Vec<F>> {
    if e_query.len() != e_train.d_e() {
        return Err(Error::DimensionMismatch(format!(
            "query embedding length {} vs d_e {}",
            e_query.len(),
            e_train.d_e()
        )));
    }
    Ok((0..e_train.n())
        .map(|i| dot(e_train.row(i), e_query).exp())
        .collect())
}

/// Matrix-free access to a symmetric positive definite operator.
///
/// Solvers and the preconditioner learner touch the kernel system only
/// through this trait, so test doubles (identity, diagonal) slot in directly.
pub trait LinearOperator<F>: Sync {
    fn dim(&self) -> usize;
    fn apply_into(&self, v: &[F], out: &mut [F]);

    fn apply(&self, v: &[F]) -> Vec<F>
    where
        F: Scalar,
    {
        let mut out = vec![F::zero(); self.dim()];
        self.apply_into(v, &mut out);
        out
    }
}

/// The regularized kernel operator `λI + G` with its ingredients.
#[derive(Debug, Clone)]
pub struct AttentionKernelSystem<F> {
    g: DenseSymMatrix<F>,
    lambda: F,
}

impl<F: Scalar> AttentionKernelSystem<F> {
    /// Wraps a kernel matrix with its regularization. Exponential kernels
    /// built by [`attention_kernel`] have strictly positive entries; test
    /// doubles (identity, diagonal) are accepted too.
    pub fn new(g: DenseSymMatrix<F>, lambda: F) -> Result<Self> {
        if !(lambda > F::zero()) {
            return Err(Error::InvalidConfig(format!("lambda {lambda} must be > 0")));
        }
        Ok(Self { g, lambda })
    }

    pub fn from_embedding(e: &EmbeddingMatrix<F>, lambda: F) -> Result<Self> {
        Self::new(attention_kernel(e), lambda)
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn lambda(&self) -> F {
        self.lambda
    }

    pub fn kernel(&self) -> &DenseSymMatrix<F> {
        &self.g
    }

    /// Dense `λI + G`, for direct factorization and spectrum analysis.
    pub fn regularized_matrix(&self) -> DenseSymMatrix<F> {
        self.g.add_scaled_identity(self.lambda)
    }
}

impl<F: Scalar> LinearOperator<F> for AttentionKernelSystem<F> {
    fn dim(&self) -> usize {
        self.g.dim()
    }

    fn apply_into(&self, v: &[F], out: &mut [F]) {
        assert_eq!(v.len(), self.dim(), "operator dimension mismatch");
        self.g.matvec_into(v, out);
        for (o, &vi) in out.iter_mut().zip(v) {
            *o += self.lambda * vi;
        }
    }
}

/// `R(α) = ‖Gα − y‖² + λ α'Gα`, evaluated exactly as written.
pub fn objective<F: Scalar>(sys: &AttentionKernelSystem<F>, alpha: &[F], y: &[F]) -> Result<F> {
    let n = sys.dim();
    if alpha.len() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "alpha {} / y {} vs dim {n}",
            alpha.len(),
            y.len()
        )));
    }
    let g_alpha = sys.kernel().matvec(alpha);
    let mut resid = F::zero();
    for (ga, &yi) in g_alpha.iter().zip(y) {
        let d = *ga - yi;
        resid += d * d;
    }
    Ok(resid + sys.lambda() * dot(alpha, &g_alpha))
}

/// `∇R(α) = 2 G ((G + λI)α − y)`; zero exactly at the solution of the
/// regularized system.
pub fn objective_gradient<F: Scalar>(
    sys: &AttentionKernelSystem<F>,
    alpha: &[F],
    y: &[F],
) -> Result<Vec<F>> {
    let n = sys.dim();
    if alpha.len() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "alpha {} / y {} vs dim {n}",
            alpha.len(),
            y.len()
        )));
    }
    let mut t = sys.apply(alpha);
    for (ti, &yi) in t.iter_mut().zip(y) {
        *ti -= yi;
    }
    let mut grad = sys.kernel().matvec(&t);
    for gi in grad.iter_mut() {
        *gi = F::c(2.0) * *gi;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests;
