//! Synthetic radio fields, measurement sampling, map reconstruction, a
//! Gaussian-process baseline, and the evaluation metrics.
//!
//! Fields live in the dBm domain throughout: path loss from a handful of
//! transmitters, a smooth random-phase shadowing component, and Gaussian
//! measurement noise added in dB. Regression coefficients are fit to dBm
//! values directly.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{
    cross_kernel, embed_positions, AttentionKernelSystem, EmbeddingMatrix, LinearOperator,
    PositionSet, DOMAIN_SIZE,
};
use crate::linalg::{chol_solve, dot, norm2, DenseSymMatrix};
use crate::rng::{self, streams};
use crate::scalar::Scalar;

/// Field-generation knobs; the defaults give a multi-peak field with a
/// dynamic range past 20 dB over the evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig<F> {
    pub transmitter_count: usize,
    /// Log-uniform transmitter power range, linear units (10 dB wide by
    /// default).
    pub power_min: F,
    pub power_max: F,
    pub path_loss_exponent: F,
    /// Shadowing standard deviation, dB.
    pub sigma_shadow: F,
    /// Shadowing correlation length, meters.
    pub shadow_length: F,
}

impl<F: Scalar> Default for FieldConfig<F> {
    fn default() -> Self {
        Self {
            transmitter_count: 3,
            power_min: F::c(1e-4),
            power_max: F::c(1e-3),
            path_loss_exponent: F::c(2.5),
            sigma_shadow: F::c(4.0),
            shadow_length: F::c(25.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Transmitter<F> {
    pub position: [F; 2],
    /// Linear power units; the field formula takes `10 log10` of the sum.
    pub power: F,
}

/// Smooth stationary shadowing: a sum of random-phase cosines with
/// wavevectors at the configured correlation scale.
#[derive(Debug, Clone)]
pub struct ShadowingField<F> {
    wavevectors: Vec<[F; 2]>,
    phases: Vec<F>,
    amplitude: F,
}

const SHADOW_COSINES: usize = 32;

impl<F: Scalar> ShadowingField<F> {
    pub fn value(&self, x: [F; 2]) -> F {
        let mut acc = F::zero();
        for (w, &ph) in self.wavevectors.iter().zip(&self.phases) {
            acc += (w[0] * x[0] + w[1] * x[1] + ph).cos();
        }
        self.amplitude * acc
    }
}

#[derive(Debug, Clone)]
pub struct RadioFieldModel<F> {
    pub transmitters: Vec<Transmitter<F>>,
    pub shadowing: ShadowingField<F>,
    pub path_loss_exponent: F,
}

/// Draws transmitters and a shadowing field; deterministic in the seed.
pub fn generate_field<F: Scalar>(cfg: &FieldConfig<F>, seed: u64) -> Result<RadioFieldModel<F>> {
    if cfg.transmitter_count == 0 {
        return Err(Error::InvalidConfig("need at least one transmitter".into()));
    }
    if !(cfg.power_min > F::zero() && cfg.power_max >= cfg.power_min) {
        return Err(Error::InvalidConfig("bad transmitter power range".into()));
    }
    if !(cfg.sigma_shadow >= F::zero()) || !(cfg.shadow_length > F::zero()) {
        return Err(Error::InvalidConfig("bad shadowing parameters".into()));
    }
    let mut r = rng::stream_rng(seed, streams::FIELD);
    let ln_lo = cfg.power_min.ln().as_f64();
    let ln_hi = cfg.power_max.ln().as_f64();
    let transmitters = (0..cfg.transmitter_count)
        .map(|_| {
            let position = [
                F::c(r.gen_range(0.0..DOMAIN_SIZE)),
                F::c(r.gen_range(0.0..DOMAIN_SIZE)),
            ];
            let power = F::c(r.gen_range(ln_lo..=ln_hi).exp());
            Transmitter { position, power }
        })
        .collect();

    let inv_len = cfg.shadow_length.recip();
    let wavevectors: Vec<[F; 2]> = rng::standard_normals::<F>(&mut r, 2 * SHADOW_COSINES)
        .chunks_exact(2)
        .map(|w| [w[0] * inv_len, w[1] * inv_len])
        .collect();
    let phases = rng::uniforms(&mut r, 0.0, 2.0 * std::f64::consts::PI, SHADOW_COSINES);
    let amplitude = cfg.sigma_shadow * (F::c(2.0) / F::from_usize_exact(SHADOW_COSINES)).sqrt();
    Ok(RadioFieldModel {
        transmitters,
        shadowing: ShadowingField {
            wavevectors,
            phases,
            amplitude,
        },
        path_loss_exponent: cfg.path_loss_exponent,
    })
}

/// Ground-truth field value in dBm:
/// `10 log10( Σ_t P_t / (1 + ‖x − x_t‖)^η ) + s(x)`.
pub fn field_value<F: Scalar>(model: &RadioFieldModel<F>, x: [F; 2]) -> F {
    let mut linear = F::zero();
    for t in &model.transmitters {
        let dx = x[0] - t.position[0];
        let dy = x[1] - t.position[1];
        let dist = (dx * dx + dy * dy).sqrt();
        linear += t.power / (F::one() + dist).powf(model.path_loss_exponent);
    }
    F::c(10.0) * linear.log10() + model.shadowing.value(x)
}

/// Noisy point measurements of the field, uniform positions, dB-domain noise.
#[derive(Debug, Clone)]
pub struct MeasurementSet<F> {
    pub positions: PositionSet<F>,
    pub values: Vec<F>,
    pub noise_std: F,
}

pub fn sample_measurements<F: Scalar>(
    model: &RadioFieldModel<F>,
    n: usize,
    noise_std: F,
    seed: u64,
) -> Result<MeasurementSet<F>> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one measurement".into()));
    }
    let mut r = rng::stream_rng(seed, streams::MEASUREMENTS);
    let positions = PositionSet::uniform(n, &mut r);
    let noise: Vec<F> = rng::standard_normals(&mut r, n);
    let values = positions
        .points()
        .iter()
        .zip(&noise)
        .map(|(&p, &eps)| field_value(model, p) + noise_std * eps)
        .collect();
    Ok(MeasurementSet {
        positions,
        values,
        noise_std,
    })
}

/// Uniform evaluation grid over the working region, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 45, cols: 45 }
    }
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point<F: Scalar>(&self, r: usize, c: usize) -> [F; 2] {
        let step = |idx: usize, count: usize| {
            if count <= 1 {
                F::c(DOMAIN_SIZE / 2.0)
            } else {
                F::c(idx as f64 * DOMAIN_SIZE / (count - 1) as f64)
            }
        };
        [step(r, self.rows), step(c, self.cols)]
    }

    pub fn positions<F: Scalar>(&self) -> Result<PositionSet<F>> {
        let mut pts = Vec::with_capacity(self.len());
        for r in 0..self.rows {
            for c in 0..self.cols {
                pts.push(self.point(r, c));
            }
        }
        PositionSet::new(pts)
    }
}

/// Field values over a grid, dBm, row-major.
#[derive(Debug, Clone)]
pub struct RadioMap<F> {
    pub grid: GridSpec,
    pub values: Vec<F>,
}

impl<F: Scalar> RadioMap<F> {
    /// CSV serialization with header `row,col,x,y,value_dbm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,x,y,value_dbm\n");
        for r in 0..self.grid.rows {
            for c in 0..self.grid.cols {
                let p: [F; 2] = self.grid.point(r, c);
                let v = self.values[r * self.grid.cols + c];
                out.push_str(&format!("{r},{c},{},{},{}\n", p[0], p[1], v));
            }
        }
        out
    }

    /// Evaluates the ground-truth field over the same grid.
    pub fn of_field(model: &RadioFieldModel<F>, grid: GridSpec) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                values.push(field_value(model, grid.point(r, c)));
            }
        }
        Self { grid, values }
    }
}

/// Kernel-expansion prediction at arbitrary query embeddings:
/// `r̂ = Σ_i exp(<e_q, e_i>) α_i`.
pub fn predict_with_query_embedding<F: Scalar>(
    e_train: &EmbeddingMatrix<F>,
    alpha: &[F],
    e_query: &[F],
) -> Result<F> {
    let k = cross_kernel(e_train, e_query)?;
    if alpha.len() != k.len() {
        return Err(Error::DimensionMismatch(format!(
            "alpha length {} vs n {}",
            alpha.len(),
            k.len()
        )));
    }
    Ok(dot(&k, alpha))
}

/// Kernel-expansion predictions at a set of positions, embedding queries
/// through the training map's own config.
pub fn predict_at<F: Scalar>(
    e_train: &EmbeddingMatrix<F>,
    alpha: &[F],
    queries: &PositionSet<F>,
) -> Result<Vec<F>> {
    if alpha.len() != e_train.n() {
        return Err(Error::DimensionMismatch(format!(
            "alpha length {} vs n {}",
            alpha.len(),
            e_train.n()
        )));
    }
    let e_query = embed_positions(queries, e_train.config())?;
    let mut out = vec![F::zero(); queries.len()];
    out.par_iter_mut().enumerate().for_each(|(j, v)| {
        let kj: Vec<F> = (0..e_train.n())
            .map(|i| dot(e_train.row(i), e_query.row(j)).exp())
            .collect();
        *v = dot(&kj, alpha);
    });
    Ok(out)
}

/// Reconstructs the radio map over a grid from fitted coefficients.
pub fn reconstruct_map<F: Scalar>(
    e_train: &EmbeddingMatrix<F>,
    alpha: &[F],
    grid: GridSpec,
) -> Result<RadioMap<F>> {
    let values = predict_at(e_train, alpha, &grid.positions()?)?;
    Ok(RadioMap { grid, values })
}

/// Gaussian-process baseline configuration (rational quadratic kernel).
#[derive(Debug, Clone, PartialEq)]
pub struct GprtConfig<F> {
    pub rq_alpha: F,
    pub length_scale: F,
    pub noise_var: F,
}

impl<F: Scalar> Default for GprtConfig<F> {
    fn default() -> Self {
        // length_scale and noise_var frozen from a one-off grid search
        // (RMSE at n = 200 over {10,20,40} x {0.5, 2.25, 4.0}).
        Self {
            rq_alpha: F::one(),
            length_scale: F::c(40.0),
            noise_var: F::c(0.5),
        }
    }
}

/// Numeric floor on the GP noise variance so the kernel system stays
/// factorizable.
const GPRT_NOISE_FLOOR: f64 = 1e-8;

fn rq_kernel<F: Scalar>(a: [F; 2], b: [F; 2], cfg: &GprtConfig<F>) -> F {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let sq = dx * dx + dy * dy;
    let denom = F::c(2.0) * cfg.rq_alpha * cfg.length_scale * cfg.length_scale;
    (F::one() + sq / denom).powf(-cfg.rq_alpha)
}

/// Fits `(K + σ²I)β = y` on the rational quadratic kernel and predicts over
/// the grid.
pub fn gprt_fit_predict<F: Scalar>(
    x_train: &PositionSet<F>,
    y: &[F],
    grid: GridSpec,
    cfg: &GprtConfig<F>,
) -> Result<RadioMap<F>> {
    let n = x_train.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y length {} vs n {n}",
            y.len()
        )));
    }
    if !(cfg.rq_alpha > F::zero() && cfg.length_scale > F::zero() && cfg.noise_var >= F::zero()) {
        return Err(Error::InvalidConfig("GP parameters must be positive".into()));
    }
    let noise = cfg.noise_var.max(F::c(GPRT_NOISE_FLOOR));
    let k = DenseSymMatrix::from_fn(n, |i, j| {
        rq_kernel(x_train.point(i), x_train.point(j), cfg)
            + if i == j { noise } else { F::zero() }
    })?;
    let beta = chol_solve(&k, y)?;
    let mut values = vec![F::zero(); grid.len()];
    values.par_iter_mut().enumerate().for_each(|(idx, v)| {
        let q = grid.point(idx / grid.cols, idx % grid.cols);
        let mut acc = F::zero();
        for i in 0..n {
            acc += rq_kernel(q, x_train.point(i), cfg) * beta[i];
        }
        *v = acc;
    });
    Ok(RadioMap { grid, values })
}

/// Condition numbers and timings forwarded into the metrics record.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalContext {
    pub kappa_raw: Option<f64>,
    pub kappa_precond: Option<f64>,
    pub iters_to_target: Option<usize>,
    pub solver_time_s: f64,
    pub precond_time_s: Option<f64>,
}

/// One row of the benchmark tables.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub obj_gap: f64,
    pub residual: f64,
    pub pred_disc: f64,
    pub rmse: f64,
    pub nmse: f64,
    pub kappa_raw: Option<f64>,
    pub kappa_precond: Option<f64>,
    pub iters_to_target: Option<usize>,
    pub solver_time_s: f64,
    pub precond_time_s: Option<f64>,
}

/// Evaluates all numeric and reconstruction metrics for one solve.
pub fn evaluate<F: Scalar>(
    sys: &AttentionKernelSystem<F>,
    alpha: &[F],
    alpha_ref: &[F],
    y: &[F],
    map_hat: &RadioMap<F>,
    truth: &RadioMap<F>,
    context: EvalContext,
) -> Result<MetricsRecord> {
    let n = sys.dim();
    if alpha.len() != n || alpha_ref.len() != n || y.len() != n {
        return Err(Error::DimensionMismatch("alpha/alpha_ref/y vs system".into()));
    }
    if map_hat.values.len() != truth.values.len() {
        return Err(Error::DimensionMismatch("map vs truth grid".into()));
    }
    let y_norm = norm2(y);
    if y_norm == F::zero() {
        return Err(Error::ZeroDenominator("‖y‖".into()));
    }

    let a_alpha = sys.apply(alpha);
    let mut res_sq = F::zero();
    for (ai, &yi) in a_alpha.iter().zip(y) {
        let d = *ai - yi;
        res_sq += d * d;
    }
    let residual = (res_sq.sqrt() / y_norm).as_f64();

    let obj = crate::kernel::objective(sys, alpha, y)?;
    let obj_ref = crate::kernel::objective(sys, alpha_ref, y)?;
    if obj_ref == F::zero() {
        return Err(Error::ZeroDenominator("R(alpha_ref)".into()));
    }
    let obj_gap = ((obj - obj_ref) / obj_ref).abs().as_f64();

    let g_alpha = sys.kernel().matvec(alpha);
    let g_ref = sys.kernel().matvec(alpha_ref);
    let mut disc_sq = F::zero();
    for (a, b) in g_alpha.iter().zip(&g_ref) {
        let d = *a - *b;
        disc_sq += d * d;
    }
    let g_ref_norm = norm2(&g_ref);
    if g_ref_norm == F::zero() {
        return Err(Error::ZeroDenominator("‖G alpha_ref‖".into()));
    }
    let pred_disc = (disc_sq.sqrt() / g_ref_norm).as_f64();

    let m = truth.values.len();
    let mut err_sq = F::zero();
    let mut truth_sq = F::zero();
    for (h, t) in map_hat.values.iter().zip(&truth.values) {
        let d = *h - *t;
        err_sq += d * d;
        truth_sq += *t * *t;
    }
    if truth_sq == F::zero() {
        return Err(Error::ZeroDenominator("Σ r(x)²".into()));
    }
    let rmse = (err_sq / F::from_usize_exact(m)).sqrt().as_f64();
    let nmse = (err_sq / truth_sq).as_f64();

    Ok(MetricsRecord {
        obj_gap,
        residual,
        pred_disc,
        rmse,
        nmse,
        kappa_raw: context.kappa_raw,
        kappa_precond: context.kappa_precond,
        iters_to_target: context.iters_to_target,
        solver_time_s: context.solver_time_s,
        precond_time_s: context.precond_time_s,
    })
}

#[cfg(test)]
mod tests;
