//! Learned spectral preconditioning.
//!
//! Random directions are pushed through the regularized kernel operator and
//! normalized; their angular distribution encodes the operator's squared
//! spectral structure. A shrinkage-regularized CCCP fixed-point iteration
//! estimates an SPD matrix `Σ*` from those directions, and the preconditioner
//! is `P = Σ*^{-1/2}`, which aligns with the inverse operator up to scale.
//!
//! One step of the iteration:
//!
//! ```text
//! F_γ(Σ)  = (1 + γ/n)^{-1} [ (n/N_r) Σ_k ū_k ū_k' / (ū_k' Σ^{-1} ū_k + ε) + γI ]
//! Σ~      = (1 − ρ) F_γ(Σ) + ρI
//! Σ_next  = Σ~ / (tr(Σ~)/n)
//! ```
//!
//! With `γ = ε = ρ = 0` and enough directions this is exactly the classical
//! fixed-point map of the angular-Gaussian scatter estimator.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::LinearOperator;
use crate::linalg::{
    gram, norm2, spd_inv_sqrt_with_eig, CholeskyFactor, DenseSymMatrix, EigenDecomposition,
};
use crate::rng::{self, streams};
use crate::scalar::Scalar;

/// Unit directions obtained by normalizing operator images of Gaussian draws.
#[derive(Debug, Clone)]
pub struct DirectionSet<F> {
    dim: usize,
    /// `count` rows of length `dim`.
    data: Vec<F>,
    /// How many draws were discarded as numerically degenerate.
    resampled: usize,
}

impl<F: Scalar> DirectionSet<F> {
    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn direction(&self, k: usize) -> &[F] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn resampled(&self) -> usize {
        self.resampled
    }

    /// Wraps externally built unit directions (test hooks).
    pub fn from_unit_rows(dim: usize, data: Vec<F>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 || data.is_empty() {
            return Err(Error::DimensionMismatch("ragged direction data".into()));
        }
        for row in data.chunks_exact(dim) {
            let n = norm2(row);
            if (n - F::one()).abs() > F::c(1e-12) {
                return Err(Error::InvalidConfig(format!("direction norm {n} is not 1")));
            }
        }
        Ok(Self {
            dim,
            data,
            resampled: 0,
        })
    }
}

/// Controls of the CCCP iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CccpConfig<F> {
    /// Trace regularization weight γ.
    pub gamma: F,
    /// Safeguard ε added to the quadratic forms.
    pub epsilon: F,
    /// Baseline shrinkage ε_ρ; also the fixed value when N_r ≥ n.
    pub rho_floor: F,
    pub max_iters: usize,
    /// Fixed-point tolerance on the relative Frobenius change.
    pub fp_tol: F,
    pub seed: u64,
}

impl<F: Scalar> Default for CccpConfig<F> {
    fn default() -> Self {
        Self {
            gamma: F::c(1e-1),
            epsilon: F::c(1e-12),
            rho_floor: F::c(1e-3),
            max_iters: 200,
            fp_tol: F::c(1e-8),
            seed: 0,
        }
    }
}

impl<F: Scalar> CccpConfig<F> {
    fn validate(&self) -> Result<()> {
        if !(self.gamma >= F::zero())
            || !(self.epsilon > F::zero())
            || !(self.rho_floor > F::zero())
        {
            return Err(Error::InvalidConfig(
                "gamma must be >= 0; epsilon and rho_floor must be > 0".into(),
            ));
        }
        if self.max_iters == 0 || !(self.fp_tol > F::zero() && self.fp_tol < F::one()) {
            return Err(Error::InvalidConfig(
                "max_iters must be >= 1 and fp_tol in (0,1)".into(),
            ));
        }
        Ok(())
    }
}

/// SPD covariance estimate, trace-normalized to `tr(Σ) = n`.
#[derive(Debug, Clone)]
pub struct SigmaEstimate<F> {
    sigma: DenseSymMatrix<F>,
    trace_normalized: bool,
}

impl<F: Scalar> SigmaEstimate<F> {
    pub fn identity(n: usize) -> Self {
        Self {
            sigma: DenseSymMatrix::identity(n),
            trace_normalized: true,
        }
    }

    pub fn new(sigma: DenseSymMatrix<F>, trace_normalized: bool) -> Self {
        Self {
            sigma,
            trace_normalized,
        }
    }

    pub fn sigma(&self) -> &DenseSymMatrix<F> {
        &self.sigma
    }

    pub fn trace_normalized(&self) -> bool {
        self.trace_normalized
    }
}

/// Outcome of the CCCP loop.
#[derive(Debug, Clone)]
pub struct CccpReport<F> {
    pub iterations: usize,
    /// `‖Σ_{t+1} − Σ_t‖_F / ‖Σ_t‖_F` at the final step.
    pub final_fp_residual: F,
    /// Shrinkage used in the final step.
    pub rho_used: F,
    pub nr_used: usize,
    /// Smallest eigenvalue of the returned Σ*.
    pub min_eig_sigma: F,
    /// False when the loop hit `max_iters` before reaching `fp_tol`.
    pub converged: bool,
    pub resampled_directions: usize,
}

/// The learned preconditioner `P = Σ*^{-1/2}` with its eigendecomposition
/// cached for condition-number evaluation.
#[derive(Debug, Clone)]
pub struct Preconditioner<F> {
    matrix: DenseSymMatrix<F>,
    eig: EigenDecomposition<F>,
    source_report: CccpReport<F>,
}

impl<F: Scalar> Preconditioner<F> {
    pub fn matrix(&self) -> &DenseSymMatrix<F> {
        &self.matrix
    }

    pub fn eig(&self) -> &EigenDecomposition<F> {
        &self.eig
    }

    pub fn report(&self) -> &CccpReport<F> {
        &self.source_report
    }

    pub fn apply_into(&self, v: &[F], out: &mut [F]) {
        self.matrix.matvec_into(v, out);
    }

    /// `κ(P^{1/2} A P^{1/2})` using the cached eigendecomposition.
    pub fn kappa_preconditioned(&self, a: &DenseSymMatrix<F>) -> Result<F> {
        crate::linalg::precond_condition_number_from_eig(&self.eig, a)
    }
}

/// Direction budget: `min(n, max(⌈8√n⌉, ⌈n/4⌉))` — square-root growth for
/// small systems, linear for large ones, never more than n.
pub fn nr_schedule(n: usize) -> usize {
    assert!(n >= 1);
    let sqrt_term = (8.0 * (n as f64).sqrt()).ceil() as usize;
    let linear_term = n.div_ceil(4);
    n.min(sqrt_term.max(linear_term))
}

const DEGENERATE_RESAMPLE_LIMIT: usize = 32;
/// Stream-id stride between resample attempts of the same direction.
const RESAMPLE_STRIDE: u64 = 1 << 48;

/// Draws `N_r` unit directions `ū_k = A z_k / ‖A z_k‖`, `z_k ~ N(0, I)`.
///
/// Direction `k` draws from its own stream, so growing `N_r` extends the set
/// without reshuffling earlier directions. Degenerate images (norm below the
/// representable floor) are resampled from a shifted stream and counted.
pub fn sample_directions<F: Scalar>(
    op: &dyn LinearOperator<F>,
    n_r: usize,
    seed: u64,
) -> Result<DirectionSet<F>> {
    if n_r == 0 {
        return Err(Error::InvalidConfig("need at least one direction".into()));
    }
    let n = op.dim();
    let floor = F::c(1e-300).max(F::min_positive_value());
    let mut data = vec![F::zero(); n_r * n];
    let resampled: usize = data
        .par_chunks_mut(n)
        .enumerate()
        .map(|(k, row)| {
            let mut attempts = 0usize;
            loop {
                let stream = streams::DIRECTIONS + k as u64 + attempts as u64 * RESAMPLE_STRIDE;
                let z: Vec<F> = rng::standard_normals(&mut rng::stream_rng(seed, stream), n);
                op.apply_into(&z, row);
                let norm = norm2(row);
                if norm > floor {
                    let inv = norm.recip();
                    row.iter_mut().for_each(|v| *v = *v * inv);
                    return Ok(attempts);
                }
                attempts += 1;
                if attempts >= DEGENERATE_RESAMPLE_LIMIT {
                    return Err(Error::DegenerateDirection { attempts });
                }
            }
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    Ok(DirectionSet {
        dim: n,
        data,
        resampled,
    })
}

/// Minimum-eigenvalue level (under trace-n normalization) that triggers the
/// protective shrinkage bump.
const MIN_EIG_TRIGGER: f64 = 1e-6;
const TRIGGERED_RHO: f64 = 0.2;
const RHO_CAP: f64 = 0.9;

/// Shrinkage schedule: the floor when directions are plentiful, growing with
/// the undersampling ratio otherwise, and bumped when Σ degenerates.
pub fn rho_schedule<F: Scalar>(n_r: usize, n: usize, gamma: F, min_eig_sigma: F, rho_floor: F) -> F {
    let mut rho = if n_r >= n {
        rho_floor
    } else {
        let ratio = F::from_usize_exact(n_r) / F::from_usize_exact(n);
        let slope = F::c(0.5) * (F::one() - ratio) * F::one().min(gamma * F::c(10.0));
        (rho_floor + slope).max(rho_floor).min(F::c(RHO_CAP))
    };
    if min_eig_sigma < F::c(MIN_EIG_TRIGGER) {
        rho = rho.max(F::c(TRIGGERED_RHO));
    }
    rho
}

/// One shrinkage-regularized CCCP step.
pub fn cccp_step<F: Scalar>(
    sigma_t: &SigmaEstimate<F>,
    dirs: &DirectionSet<F>,
    cfg: &CccpConfig<F>,
    rho: F,
) -> Result<SigmaEstimate<F>> {
    let chol = CholeskyFactor::new(sigma_t.sigma())?;
    step_core(&chol, dirs, cfg, rho)
}

/// Step body reusing an existing factorization of Σ_t.
fn step_core<F: Scalar>(
    chol: &CholeskyFactor<F>,
    dirs: &DirectionSet<F>,
    cfg: &CccpConfig<F>,
    rho: F,
) -> Result<SigmaEstimate<F>> {
    let n = chol.dim();
    if dirs.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "directions dim {} vs sigma dim {n}",
            dirs.dim()
        )));
    }
    let n_r = dirs.count();
    let nf = F::from_usize_exact(n);
    let prefactor = (F::one() + cfg.gamma / nf).recip();

    // Quadratic forms ū' Σ^{-1} ū via one forward solve per direction.
    let quad_forms = chol.quadratic_forms_inv_multi(dirs.data());

    // F_γ = prefactor * [ (n/N_r) Σ_k ū ū' / (q_k + ε) + γ I ], assembled as
    // a Gram matrix of weight-scaled directions.
    let scale_base = prefactor * nf / F::from_usize_exact(n_r);
    let mut scaled = Vec::with_capacity(n_r * n);
    for (row, &q) in dirs.data().chunks_exact(n).zip(&quad_forms) {
        let w = (scale_base / (q + cfg.epsilon)).sqrt();
        scaled.extend(row.iter().map(|&v| v * w));
    }
    let mut f = gram(&transpose(&scaled, n_r, n), n, n_r);
    let gamma_term = prefactor * cfg.gamma;
    let one_minus_rho = F::one() - rho;
    let mut trace = F::zero();
    for i in 0..n {
        f[i * n + i] += gamma_term;
        trace += one_minus_rho * f[i * n + i] + rho;
    }
    if !(trace > F::zero()) {
        return Err(Error::ZeroDenominator(format!(
            "trace {trace} of pre-normalized sigma"
        )));
    }
    let norm = nf / trace;
    for i in 0..n {
        for j in 0..n {
            let v = one_minus_rho * f[i * n + j] + if i == j { rho } else { F::zero() };
            f[i * n + j] = v * norm;
        }
    }
    Ok(SigmaEstimate::new(DenseSymMatrix::from_parts(n, f), true))
}

fn transpose<F: Scalar>(m: &[F], rows: usize, cols: usize) -> Vec<F> {
    let mut out = vec![F::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = m[r * cols + c];
        }
    }
    out
}

/// Inverse power iterations used for the shrinkage trigger estimate.
const MIN_EIG_PROBE_ITERS: usize = 10;

/// Runs the full learning loop: sample directions, iterate the CCCP map from
/// `Σ_0 = I` to its fixed point, and return `P = Σ*^{-1/2}`.
///
/// When `max_iters` is exhausted the best (latest) iterate is returned with
/// `converged = false` on the report.
pub fn learn_preconditioner<F: Scalar>(
    op: &dyn LinearOperator<F>,
    cfg: &CccpConfig<F>,
) -> Result<(Preconditioner<F>, CccpReport<F>)> {
    cfg.validate()?;
    let n = op.dim();
    let n_r = nr_schedule(n);
    let dirs = sample_directions(op, n_r, cfg.seed)?;
    learn_from_directions(&dirs, cfg)
}

/// Learning loop over an existing direction set (also used by tests that
/// control `N_r` directly).
pub fn learn_from_directions<F: Scalar>(
    dirs: &DirectionSet<F>,
    cfg: &CccpConfig<F>,
) -> Result<(Preconditioner<F>, CccpReport<F>)> {
    cfg.validate()?;
    let n = dirs.dim();
    let n_r = dirs.count();
    let nf = F::from_usize_exact(n);

    let mut sigma = SigmaEstimate::identity(n);
    let mut fp_residual = F::infinity();
    let mut rho_used = cfg.rho_floor;
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < cfg.max_iters {
        let chol = CholeskyFactor::new(sigma.sigma())?;
        let min_eig_est = if iterations == 0 {
            F::one()
        } else {
            chol.min_eigenvalue_estimate(MIN_EIG_PROBE_ITERS)
        };
        rho_used = rho_schedule(n_r, n, cfg.gamma, min_eig_est, cfg.rho_floor);
        let next = step_core(&chol, dirs, cfg, rho_used)?;
        iterations += 1;

        let mut diff_sq = F::zero();
        for (a, b) in next.sigma().entries().iter().zip(sigma.sigma().entries()) {
            let d = *a - *b;
            diff_sq += d * d;
        }
        fp_residual = diff_sq.sqrt() / sigma.sigma().fro_norm();
        sigma = next;
        if fp_residual <= cfg.fp_tol {
            converged = true;
            break;
        }
    }

    let (p, p_eig) = spd_inv_sqrt_with_eig(sigma.sigma())?;
    // P's largest eigenvalue is w_min(Σ*)^{-1/2}.
    let min_eig_sigma = p_eig.max_eigenvalue().powi(-2);
    let report = CccpReport {
        iterations,
        final_fp_residual: fp_residual,
        rho_used,
        nr_used: n_r,
        min_eig_sigma,
        converged,
        resampled_directions: dirs.resampled(),
    };
    debug_assert!(
        (sigma.sigma().trace() - nf).abs() <= F::c(1e-8) * nf,
        "fixed point lost trace normalization"
    );
    Ok((
        Preconditioner {
            matrix: p,
            eig: p_eig,
            source_report: report.clone(),
        },
        report,
    ))
}
