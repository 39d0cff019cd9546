//! Solvers for the regularized system `(λI + G)α = y`: preconditioned
//! conjugate gradient, plain gradient descent on the regression objective,
//! and a dense Cholesky reference.
//!
//! Every iterative solver records per-iteration relative residuals and
//! objective values; the iterations-to-target count is derived afterwards
//! from the objective history against the reference objective, so solvers
//! can keep running to their residual tolerance.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::kernel::{AttentionKernelSystem, LinearOperator};
use crate::linalg::{chol_solve, dot, norm2};
use crate::scalar::Scalar;

/// Why a solve loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative residual reached the tolerance.
    ResidualTol,
    /// Iteration budget exhausted (or cut short by numeric blow-up, see
    /// `SolveReport::diverged`).
    MaxIters,
    /// Objective stopped improving for a sustained stretch.
    Stagnation,
    /// Objective gap against the reference reached the target.
    TargetGap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<F> {
    /// Relative-residual stopping tolerance for PCG.
    pub pcg_tol: F,
    /// Objective-gap target used for `iters_to_target` and GD early stop.
    pub target_tol: F,
    /// PCG iteration cap; `None` means `10 * n`.
    pub max_iters: Option<usize>,
    /// Gradient-descent step size; `None` means it must come from
    /// [`gd_grid_search`].
    pub eta: Option<F>,
    /// Gradient-descent iteration budget.
    pub gd_budget: usize,
}

impl<F: Scalar> Default for SolverConfig<F> {
    fn default() -> Self {
        Self {
            pcg_tol: F::c(1e-10),
            target_tol: F::c(1e-3),
            max_iters: None,
            eta: None,
            gd_budget: 2000,
        }
    }
}

/// Per-solve record: histories, timing, and the termination reason.
#[derive(Debug, Clone)]
pub struct SolveReport<F> {
    pub iterations: usize,
    /// `‖r^k‖ / ‖y‖` after each iteration.
    pub residual_history: Vec<F>,
    /// `R(α^k)` after each iteration.
    pub objective_history: Vec<F>,
    /// First iteration whose objective gap against the reference fell below
    /// the target, when a reference objective was supplied.
    pub iters_to_target: Option<usize>,
    pub wall_time_s: f64,
    pub termination: Termination,
    /// Set when the objective exploded past the divergence guard.
    pub diverged: bool,
}

impl<F: Scalar> SolveReport<F> {
    fn fill_iters_to_target(&mut self, ref_obj: Option<F>, target_tol: F) {
        let Some(reference) = ref_obj else {
            return;
        };
        if reference == F::zero() {
            return;
        }
        self.iters_to_target = self
            .objective_history
            .iter()
            .position(|&obj| ((obj - reference) / reference).abs() <= target_tol)
            .map(|idx| idx + 1);
    }
}

/// Objective value reconstructed from PCG state without extra products:
/// `Gα = y − λα − r`, so `R(α) = ‖Gα − y‖² + λ α'Gα` costs O(n).
fn objective_from_residual<F: Scalar>(alpha: &[F], r: &[F], y: &[F], lambda: F) -> F {
    let mut fit = F::zero();
    let mut quad = F::zero();
    for ((&ai, &ri), &yi) in alpha.iter().zip(r).zip(y) {
        let g_alpha = yi - lambda * ai - ri;
        let d = g_alpha - yi;
        fit += d * d;
        quad += ai * g_alpha;
    }
    fit + lambda * quad
}

/// Left-preconditioned conjugate gradient on `(λI + G)α = y`.
///
/// `precond` applies the SPD preconditioner to a residual. Exactly one
/// operator application and one preconditioner application happen per
/// iteration, plus one preconditioner application at start-up.
pub fn pcg_solve<F: Scalar>(
    sys: &AttentionKernelSystem<F>,
    y: &[F],
    precond: &dyn Fn(&[F], &mut [F]),
    cfg: &SolverConfig<F>,
    ref_obj: Option<F>,
) -> Result<(Vec<F>, SolveReport<F>)> {
    pcg_solve_operator(sys, sys.lambda(), y, precond, cfg, ref_obj)
}

/// Operator-generic PCG core; `lambda` is only used to reconstruct objective
/// values from the residual recurrence.
pub fn pcg_solve_operator<F: Scalar>(
    op: &dyn LinearOperator<F>,
    lambda: F,
    y: &[F],
    precond: &dyn Fn(&[F], &mut [F]),
    cfg: &SolverConfig<F>,
    ref_obj: Option<F>,
) -> Result<(Vec<F>, SolveReport<F>)> {
    let n = op.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "rhs length {} vs dim {n}",
            y.len()
        )));
    }
    let y_norm = norm2(y);
    let mut report = SolveReport {
        iterations: 0,
        residual_history: Vec::new(),
        objective_history: Vec::new(),
        iters_to_target: None,
        wall_time_s: 0.0,
        termination: Termination::ResidualTol,
        diverged: false,
    };
    let mut alpha = vec![F::zero(); n];
    if y_norm == F::zero() {
        return Ok((alpha, report));
    }
    let max_iters = cfg.max_iters.unwrap_or(10 * n);

    let clock = Instant::now();
    let mut r = y.to_vec();
    let mut z = vec![F::zero(); n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    if rz <= F::zero() {
        return Err(Error::IndefinitePreconditioner(rz.as_f64()));
    }
    let mut w = vec![F::zero(); n];
    report.termination = Termination::MaxIters;
    for k in 1..=max_iters {
        op.apply_into(&p, &mut w);
        let curvature = dot(&p, &w);
        if curvature <= F::zero() {
            return Err(Error::BreakdownZeroCurvature(curvature.as_f64()));
        }
        let step = rz / curvature;
        for ((ai, pi), (ri, wi)) in alpha.iter_mut().zip(&p).zip(r.iter_mut().zip(&w)) {
            *ai += step * *pi;
            *ri -= step * *wi;
        }
        let rel = norm2(&r) / y_norm;
        report.residual_history.push(rel);
        report
            .objective_history
            .push(objective_from_residual(&alpha, &r, y, lambda));
        report.iterations = k;
        if rel <= cfg.pcg_tol {
            report.termination = Termination::ResidualTol;
            break;
        }
        precond(&r, &mut z);
        let rz_next = dot(&r, &z);
        if rz_next <= F::zero() {
            return Err(Error::IndefinitePreconditioner(rz_next.as_f64()));
        }
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    report.wall_time_s = clock.elapsed().as_secs_f64();
    report.fill_iters_to_target(ref_obj, cfg.target_tol);
    Ok((alpha, report))
}

/// Diagonal preconditioner `d_i = 1 / (λ + G_ii)`.
pub fn jacobi_preconditioner<F: Scalar>(sys: &AttentionKernelSystem<F>) -> Vec<F> {
    let lambda = sys.lambda();
    sys.kernel()
        .diagonal()
        .into_iter()
        .map(|g| (lambda + g).recip())
        .collect()
}

/// Objective improvement window for the stagnation cut-off.
const STAGNATION_WINDOW: usize = 50;
const STAGNATION_RELATIVE: f64 = 1e-14;
/// Relative objective growth that counts as divergence.
const DIVERGENCE_FACTOR: f64 = 1e6;

/// Gradient descent `α ← α − η ∇R(α)` on the regression objective.
///
/// Runs the full budget unless the objective gap reaches the target (when a
/// reference is supplied), the objective stagnates, or it blows up; the
/// latter sets the `diverged` flag rather than failing.
pub fn gd_solve<F: Scalar>(
    sys: &AttentionKernelSystem<F>,
    y: &[F],
    cfg: &SolverConfig<F>,
    ref_obj: Option<F>,
) -> Result<(Vec<F>, SolveReport<F>)> {
    let eta = cfg.eta.ok_or_else(|| {
        Error::InvalidConfig("gd_solve needs eta (set it or run gd_grid_search)".into())
    })?;
    let n = sys.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "rhs length {} vs dim {n}",
            y.len()
        )));
    }
    let y_norm = norm2(y);
    let mut report = SolveReport {
        iterations: 0,
        residual_history: Vec::new(),
        objective_history: Vec::new(),
        iters_to_target: None,
        wall_time_s: 0.0,
        termination: Termination::MaxIters,
        diverged: false,
    };
    let mut alpha = vec![F::zero(); n];
    let clock = Instant::now();
    let initial_obj = dot(y, y);
    let mut best_recent = initial_obj;
    let mut since_improvement = 0usize;
    let mut t = vec![F::zero(); n];
    for k in 0..=cfg.gd_budget {
        // t = (λI + G)α − y; everything else derives from it.
        sys.apply_into(&alpha, &mut t);
        for (ti, &yi) in t.iter_mut().zip(y) {
            *ti -= yi;
        }
        let mut fit = F::zero();
        let mut quad = F::zero();
        let mut res_sq = F::zero();
        for ((&ti, &ai), &yi) in t.iter().zip(&alpha).zip(y) {
            res_sq += ti * ti;
            let g_alpha_minus_y = ti - sys.lambda() * ai;
            fit += g_alpha_minus_y * g_alpha_minus_y;
            quad += ai * (g_alpha_minus_y + yi);
        }
        let obj = fit + sys.lambda() * quad;
        if k > 0 {
            report.residual_history.push(if y_norm == F::zero() {
                F::zero()
            } else {
                res_sq.sqrt() / y_norm
            });
            report.objective_history.push(obj);
            report.iterations = k;
        }
        if let Some(reference) = ref_obj {
            if reference != F::zero() && ((obj - reference) / reference).abs() <= cfg.target_tol {
                report.termination = Termination::TargetGap;
                break;
            }
        }
        if !obj.is_finite() || obj > F::c(DIVERGENCE_FACTOR) * initial_obj.max(F::one()) {
            report.diverged = true;
            break;
        }
        if obj < best_recent * (F::one() - F::c(STAGNATION_RELATIVE)) {
            best_recent = obj;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= STAGNATION_WINDOW {
                report.termination = Termination::Stagnation;
                break;
            }
        }
        if k == cfg.gd_budget {
            break;
        }
        let mut grad = sys.kernel().matvec(&t);
        for (ai, gi) in alpha.iter_mut().zip(grad.iter_mut()) {
            *ai -= eta * F::c(2.0) * *gi;
        }
    }
    report.wall_time_s = clock.elapsed().as_secs_f64();
    report.fill_iters_to_target(ref_obj, cfg.target_tol);
    Ok((alpha, report))
}

/// Probe budget for step-size selection.
const GRID_PROBE_ITERS: usize = 200;

/// The step-size grid `{1e-k, 3e-k : k = 2..8}`, descending.
pub fn default_eta_grid<F: Scalar>() -> Vec<F> {
    let mut grid = Vec::with_capacity(14);
    for k in 2..=8 {
        let base = 10f64.powi(-k);
        grid.push(F::c(3.0 * base));
        grid.push(F::c(base));
    }
    grid
}

/// Picks the step size with the lowest objective after a fixed probe run;
/// exact ties go to the smaller step.
pub fn gd_grid_search<F: Scalar>(sys: &AttentionKernelSystem<F>, y: &[F], grid: &[F]) -> Result<F> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty step-size grid".into()));
    }
    let cfg = SolverConfig {
        eta: None,
        gd_budget: GRID_PROBE_ITERS,
        ..SolverConfig::default()
    };
    let mut best: Option<(F, F)> = None;
    for &eta in grid {
        let run_cfg = SolverConfig {
            eta: Some(eta),
            ..cfg.clone()
        };
        let (_, report) = gd_solve(sys, y, &run_cfg, None)?;
        let final_obj = if report.diverged {
            F::infinity()
        } else {
            *report
                .objective_history
                .last()
                .unwrap_or(&F::infinity())
        };
        best = match best {
            None => Some((eta, final_obj)),
            Some((b_eta, b_obj)) => {
                if final_obj < b_obj || (final_obj == b_obj && eta < b_eta) {
                    Some((eta, final_obj))
                } else {
                    Some((b_eta, b_obj))
                }
            }
        };
    }
    Ok(best.expect("nonempty grid").0)
}

/// High-accuracy reference: dense Cholesky on the optimality system.
pub fn reference_solve<F: Scalar>(sys: &AttentionKernelSystem<F>, y: &[F]) -> Result<Vec<F>> {
    chol_solve(&sys.regularized_matrix(), y)
}
