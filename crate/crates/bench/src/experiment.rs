//! The method × size × seed sweep.
//!
//! Scene artifacts (field, measurements, embeddings, kernel, reference
//! solution, raw condition number) are computed once per `(n, seed)` and
//! shared by every method, so method comparisons see identical data. Cells
//! run on a small worker pool; `LAKER_THREADS` caps the worker count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use laker_core::cartography::{
    evaluate, generate_field, gprt_fit_predict, reconstruct_map, sample_measurements, EvalContext,
    FieldConfig, GprtConfig, GridSpec, MetricsRecord, RadioMap,
};
use laker_core::kernel::{
    embed_positions, objective, AttentionKernelSystem, EmbeddingConfig, EmbeddingMatrix,
};
use laker_core::linalg::{
    precond_condition_number_diag, sym_eigenvalues, DenseSymMatrix,
};
use laker_core::precond::{learn_preconditioner, CccpConfig};
use laker_core::rng::mix_seed;
use laker_core::solve::{
    default_eta_grid, gd_grid_search, gd_solve, jacobi_preconditioner, pcg_solve, reference_solve,
    SolveReport, SolverConfig,
};

use crate::config::{ExperimentConfig, Method};
use crate::Result;

/// Tags mixed into per-cell seeds; scene streams are method-independent.
const SCENE_TAG: u64 = 0x5ce9e;

fn method_tag(m: Method) -> u64 {
    match m {
        Method::Laker => 1,
        Method::Jacobi => 2,
        Method::Gd => 3,
        Method::Reference => 4,
        Method::Gprt => 5,
    }
}

/// One (iteration, relative residual, objective gap) sample of a solver run.
#[derive(Debug, Clone, Copy)]
pub struct HistoryPoint {
    pub iteration: usize,
    pub residual: f64,
    pub obj_gap: f64,
}

/// One sweep cell result.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub n: usize,
    pub method: Method,
    pub seed: u64,
    pub metrics: MetricsRecord,
    /// Relative file name of the per-iteration history, when the method is
    /// iterative.
    pub history_path: Option<String>,
    pub history: Vec<HistoryPoint>,
}

/// A cell that errored; recorded instead of aborting the sweep.
#[derive(Debug, Clone)]
pub struct FailedCell {
    pub n: usize,
    pub method: Method,
    pub seed: u64,
    pub message: String,
}

struct Scene {
    sys: AttentionKernelSystem<f64>,
    positions: laker_core::kernel::PositionSet<f64>,
    dense: DenseSymMatrix<f64>,
    embedding: EmbeddingMatrix<f64>,
    y: Vec<f64>,
    alpha_ref: Vec<f64>,
    ref_obj: f64,
    ref_time_s: f64,
    truth: RadioMap<f64>,
    kappa_raw: f64,
    grid: GridSpec,
}

/// Field, measurements, and embedded kernel system of one sweep cell; shared
/// by the harness, the spectrum subcommand, and the acceptance suite.
pub fn scene_ingredients(
    config: &ExperimentConfig,
    n: usize,
    seed: u64,
) -> Result<(
    laker_core::cartography::RadioFieldModel<f64>,
    laker_core::cartography::MeasurementSet<f64>,
    EmbeddingMatrix<f64>,
    AttentionKernelSystem<f64>,
)> {
    // Scene streams are keyed by the realization seed alone: one ground-truth
    // field, one embedding map, and one measurement-position stream per
    // realization. Size sweeps then draw nested measurement sets from the
    // same scene and trace a learning curve rather than hopping between
    // fields.
    let scene_seed = mix_seed(&[seed, SCENE_TAG]);
    let field_cfg = FieldConfig {
        transmitter_count: config.field.transmitter_count,
        power_min: config.field.power_min,
        power_max: config.field.power_max,
        path_loss_exponent: config.field.path_loss_exponent,
        sigma_shadow: config.field.sigma_shadow,
        shadow_length: config.field.shadow_length,
    };
    let field = generate_field(&field_cfg, scene_seed)?;
    let measurements = sample_measurements(&field, n, config.noise_std, scene_seed)?;
    let embed_cfg = EmbeddingConfig {
        d_e: config.embedding.d_e,
        seed: scene_seed,
        length_scale: config.embedding.length_scale,
        target_mean_affinity: config.embedding.target_mean_affinity,
    };
    let embedding = embed_positions(&measurements.positions, &embed_cfg)?;
    let sys = AttentionKernelSystem::from_embedding(&embedding, config.lambda)?;
    Ok((field, measurements, embedding, sys))
}

fn build_scene(config: &ExperimentConfig, n: usize, seed: u64) -> Result<Scene> {
    let (field, measurements, embedding, sys) = scene_ingredients(config, n, seed)?;
    let dense = sys.regularized_matrix();

    let clock = Instant::now();
    let alpha_ref = reference_solve(&sys, &measurements.values)?;
    let ref_time_s = clock.elapsed().as_secs_f64();
    let ref_obj = objective(&sys, &alpha_ref, &measurements.values)?;

    let grid = GridSpec {
        rows: config.grid_rows,
        cols: config.grid_cols,
    };
    let truth = RadioMap::of_field(&field, grid);
    let w = sym_eigenvalues(&dense)?;
    let kappa_raw = w[w.len() - 1] / w[0];

    Ok(Scene {
        sys,
        positions: measurements.positions,
        dense,
        embedding,
        y: measurements.values,
        alpha_ref,
        ref_obj,
        ref_time_s,
        truth,
        kappa_raw,
        grid,
    })
}

fn history_from_report(report: &SolveReport<f64>, ref_obj: f64) -> Vec<HistoryPoint> {
    report
        .residual_history
        .iter()
        .zip(&report.objective_history)
        .enumerate()
        .map(|(i, (&residual, &obj))| HistoryPoint {
            iteration: i + 1,
            residual,
            obj_gap: ((obj - ref_obj) / ref_obj).abs(),
        })
        .collect()
}

fn solver_config(config: &ExperimentConfig) -> SolverConfig<f64> {
    SolverConfig {
        pcg_tol: config.pcg_tol,
        target_tol: config.target_tol,
        max_iters: None,
        eta: None,
        gd_budget: config.gd_budget,
    }
}

fn run_method(
    config: &ExperimentConfig,
    scene: &Scene,
    n: usize,
    method: Method,
    seed: u64,
) -> Result<ResultRow> {
    let scfg = solver_config(config);
    let method_seed = mix_seed(&[seed, n as u64, method_tag(method)]);
    let history_path = matches!(method, Method::Laker | Method::Jacobi | Method::Gd)
        .then(|| format!("history_{n}_{}_{seed}.csv", method.as_str()));

    let (alpha, solve_report, kappa_precond, precond_time_s): (
        Vec<f64>,
        Option<SolveReport<f64>>,
        Option<f64>,
        Option<f64>,
    ) = match method {
        Method::Laker => {
            let cccp = CccpConfig {
                gamma: config.gamma,
                seed: method_seed,
                ..CccpConfig::default()
            };
            let clock = Instant::now();
            let (precond, _) = learn_preconditioner(&scene.sys, &cccp)?;
            let precond_time = clock.elapsed().as_secs_f64();
            let kappa = precond.kappa_preconditioned(&scene.dense)?;
            let apply = |r: &[f64], out: &mut [f64]| precond.apply_into(r, out);
            let (alpha, report) =
                pcg_solve(&scene.sys, &scene.y, &apply, &scfg, Some(scene.ref_obj))?;
            (alpha, Some(report), Some(kappa), Some(precond_time))
        }
        Method::Jacobi => {
            let clock = Instant::now();
            let d = jacobi_preconditioner(&scene.sys);
            let precond_time = clock.elapsed().as_secs_f64();
            let kappa = precond_condition_number_diag(&d, &scene.dense)?;
            let apply = |r: &[f64], out: &mut [f64]| {
                for ((o, &ri), &di) in out.iter_mut().zip(r).zip(&d) {
                    *o = di * ri;
                }
            };
            let (alpha, report) =
                pcg_solve(&scene.sys, &scene.y, &apply, &scfg, Some(scene.ref_obj))?;
            (alpha, Some(report), Some(kappa), Some(precond_time))
        }
        Method::Gd => {
            let eta = gd_grid_search(&scene.sys, &scene.y, &default_eta_grid())?;
            let gd_cfg = SolverConfig {
                eta: Some(eta),
                ..scfg
            };
            let (alpha, report) = gd_solve(&scene.sys, &scene.y, &gd_cfg, Some(scene.ref_obj))?;
            (alpha, Some(report), None, None)
        }
        Method::Reference => (scene.alpha_ref.clone(), None, None, None),
        Method::Gprt => {
            // Purely spatial baseline; fitted and evaluated on the map only.
            let gcfg = GprtConfig {
                rq_alpha: config.gprt.rq_alpha,
                length_scale: config.gprt.length_scale,
                noise_var: config.gprt.noise_var,
            };
            let clock = Instant::now();
            let map = gprt_fit_predict(&scene.positions, &scene.y, scene.grid, &gcfg)?;
            let fit_time = clock.elapsed().as_secs_f64();
            let (rmse, nmse) = map_errors(&map, &scene.truth);
            let metrics = MetricsRecord {
                obj_gap: f64::NAN,
                residual: f64::NAN,
                pred_disc: f64::NAN,
                rmse,
                nmse,
                kappa_raw: Some(scene.kappa_raw),
                kappa_precond: None,
                iters_to_target: None,
                solver_time_s: fit_time,
                precond_time_s: None,
            };
            return Ok(ResultRow {
                n,
                method,
                seed,
                metrics,
                history_path: None,
                history: Vec::new(),
            });
        }
    };

    let map = reconstruct_map(&scene.embedding, &alpha, scene.grid)?;
    let context = EvalContext {
        kappa_raw: Some(scene.kappa_raw),
        kappa_precond,
        iters_to_target: solve_report.as_ref().and_then(|r| r.iters_to_target),
        solver_time_s: solve_report
            .as_ref()
            .map_or(scene.ref_time_s, |r| r.wall_time_s),
        precond_time_s,
    };
    let metrics = evaluate(
        &scene.sys,
        &alpha,
        &scene.alpha_ref,
        &scene.y,
        &map,
        &scene.truth,
        context,
    )?;
    let history = solve_report
        .as_ref()
        .map(|r| history_from_report(r, scene.ref_obj))
        .unwrap_or_default();
    Ok(ResultRow {
        n,
        method,
        seed,
        metrics,
        history_path,
        history,
    })
}

fn map_errors(map: &RadioMap<f64>, truth: &RadioMap<f64>) -> (f64, f64) {
    let m = truth.values.len() as f64;
    let mut err_sq = 0.0;
    let mut truth_sq = 0.0;
    for (h, t) in map.values.iter().zip(&truth.values) {
        err_sq += (h - t) * (h - t);
        truth_sq += t * t;
    }
    ((err_sq / m).sqrt(), err_sq / truth_sq)
}

/// Runs the full sweep; failed cells are recorded, not fatal.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(Vec<ResultRow>, Vec<FailedCell>)> {
    config.validate()?;
    let mut cells: Vec<(usize, u64)> = Vec::new();
    for &n in &config.sizes {
        for &seed in &config.seeds {
            cells.push((n, seed));
        }
    }
    // Large scenes first for better load balance across workers.
    cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let workers = worker_count(cells.len());
    let next_cell = AtomicUsize::new(0);
    let rows = Mutex::new(Vec::<ResultRow>::new());
    let failures = Mutex::new(Vec::<FailedCell>::new());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next_cell.fetch_add(1, Ordering::Relaxed);
                if idx >= cells.len() {
                    break;
                }
                let (n, seed) = cells[idx];
                match build_scene(config, n, seed) {
                    Ok(scene) => {
                        for &method in &config.methods {
                            match run_method(config, &scene, n, method, seed) {
                                Ok(row) => rows.lock().unwrap().push(row),
                                Err(e) => failures.lock().unwrap().push(FailedCell {
                                    n,
                                    method,
                                    seed,
                                    message: e.to_string(),
                                }),
                            }
                        }
                    }
                    Err(e) => {
                        let mut f = failures.lock().unwrap();
                        for &method in &config.methods {
                            f.push(FailedCell {
                                n,
                                method,
                                seed,
                                message: format!("scene generation failed: {e}"),
                            });
                        }
                    }
                }
            });
        }
    });

    let mut rows = rows.into_inner().unwrap();
    rows.sort_by(|a, b| {
        (a.n, a.method, a.seed).cmp(&(b.n, b.method, b.seed))
    });
    let mut failures = failures.into_inner().unwrap();
    failures.sort_by(|a, b| (a.n, a.method, a.seed).cmp(&(b.n, b.method, b.seed)));
    Ok((rows, failures))
}

/// Worker count: `LAKER_THREADS` when set, otherwise the machine parallelism,
/// never more than the number of cells.
fn worker_count(cells: usize) -> usize {
    let default = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1);
    let requested = std::env::var("LAKER_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(default);
    requested.min(cells.max(1))
}
