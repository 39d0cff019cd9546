//! Command-line interface.
//!
//! Subcommands: `run` (the experiment sweep), `demo-example3` (the three-point
//! worked example with golden checks), and `spectrum` (condition numbers of
//! the raw and preconditioned system at one size).
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 failed cells or a
//! failed demo check.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use laker_core::kernel::{
    attention_kernel, cross_kernel, AttentionKernelSystem, EmbeddingConfig, EmbeddingMatrix,
};
use laker_core::linalg::{chol_solve, norm2, sym_eigenvalues};
use laker_core::precond::{learn_preconditioner, nr_schedule, CccpConfig};

use crate::config::{ExperimentConfig, Method};
use crate::experiment::run_experiment;
use crate::tables::emit_tables;
use crate::{BenchError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "laker",
    about = "Learned-preconditioner attention kernel regression benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment sweep and write tables under the output directory.
    Run {
        /// JSON config file; omitted fields take benchmark defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override problem sizes (comma separated).
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Override methods (comma separated: laker,jacobi,gd,reference,gprt).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Override seeds (comma separated).
        #[arg(long = "seed", value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the three-point worked example end to end and check it.
    DemoExample3,
    /// Print the eigenvalue summary and condition numbers at one size.
    Spectrum {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Entry point used by `main` and by tests; returns the process exit code.
pub fn cli_main<I>(args: I) -> i32
where
    I: IntoIterator,
    I::Item: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Usage/help go to stdout with success; argument errors exit 1.
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { 0 } else { 1 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(BenchError::Config(msg)) => {
            eprintln!("config error: {msg}");
            1
        }
        Err(BenchError::Io { path, source }) => {
            eprintln!("io error on {}: {source}", path.display());
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run {
            config,
            sizes,
            methods,
            seeds,
            out,
        } => run_command(config, sizes, methods, seeds, out),
        Command::DemoExample3 => demo_example3(),
        Command::Spectrum { n, seed } => spectrum(n, seed),
    }
}

fn run_command(
    config_path: Option<PathBuf>,
    sizes: Option<Vec<usize>>,
    methods: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
) -> Result<i32> {
    let mut config = match config_path {
        Some(path) => ExperimentConfig::from_json_file(&path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(sizes) = sizes {
        config.sizes = sizes;
    }
    if let Some(methods) = methods {
        config.methods = methods
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(seeds) = seeds {
        config.seeds = seeds;
    }
    if let Some(out) = out {
        config.output_dir = out;
    }
    config
        .validate()
        .map_err(|e| BenchError::Config(e.to_string()))?;

    let (rows, failures) = run_experiment(&config)?;
    if !rows.is_empty() {
        let created = emit_tables(&rows, &config.output_dir)?;
        println!(
            "wrote {} files to {} ({} rows)",
            created.len(),
            config.output_dir.display(),
            rows.len()
        );
    }
    if failures.is_empty() {
        Ok(0)
    } else {
        for f in &failures {
            eprintln!(
                "failed cell n={} method={} seed={}: {}",
                f.n, f.method, f.seed, f.message
            );
        }
        Ok(2)
    }
}

/// The printed inputs of the worked example.
pub mod demo {
    pub const EMBEDDINGS: [[f64; 2]; 3] = [[0.241, 0.444], [-0.336, 0.112], [-0.220, 0.353]];
    pub const QUERY: [f64; 2] = [0.051, 0.452];
    pub const Y: [f64; 3] = [-66.14, -65.77, -77.30];
    pub const LAMBDA: f64 = 0.1;
    pub const KERNEL: [[f64; 3]; 3] = [
        [1.291, 0.969, 1.109],
        [0.969, 1.133, 1.120],
        [1.109, 1.120, 1.189],
    ];
    pub const ALPHA: [f64; 3] = [0.815, 5.438, -65.406];
    pub const CROSS: [f64; 3] = [1.237, 1.034, 1.160];
    pub const PREDICTION: f64 = -69.2;
}

/// Computed outputs of the worked example.
pub struct DemoOutput {
    pub kernel: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub cross: Vec<f64>,
    pub prediction: f64,
    pub residual: f64,
    pub checks: Vec<(String, bool)>,
}

/// Runs the worked example end to end and evaluates the golden checks.
pub fn run_demo_example3() -> Result<DemoOutput> {
    let cfg = EmbeddingConfig::<f64> {
        d_e: 2,
        ..EmbeddingConfig::default()
    };
    let rows: Vec<Vec<f64>> = demo::EMBEDDINGS.iter().map(|r| r.to_vec()).collect();
    let e = EmbeddingMatrix::from_rows(&rows, cfg)?;
    let g = attention_kernel(&e);
    let sys = AttentionKernelSystem::new(g.clone(), demo::LAMBDA)?;
    let dense = sys.regularized_matrix();
    let alpha = chol_solve(&dense, &demo::Y)?;
    let cross = cross_kernel(&e, &demo::QUERY)?;
    let prediction: f64 = cross.iter().zip(&alpha).map(|(k, a)| k * a).sum();

    let r: Vec<f64> = dense
        .matvec(&alpha)
        .iter()
        .zip(&demo::Y)
        .map(|(ax, y)| ax - y)
        .collect();
    let residual = norm2(&r) / norm2(&demo::Y);

    let mut checks = Vec::new();
    let mut kernel_ok = true;
    for i in 0..3 {
        for j in 0..3 {
            kernel_ok &= (g.get(i, j) - demo::KERNEL[i][j]).abs() <= 5e-3;
        }
    }
    checks.push(("kernel entries within 5e-3 of print".into(), kernel_ok));
    let alpha_scale = demo::ALPHA
        .iter()
        .fold(0.0f64, |acc, a| acc.max(a.abs()));
    let alpha_ok = alpha
        .iter()
        .zip(&demo::ALPHA)
        .all(|(a, p)| (a - p).abs() <= 5e-3 * alpha_scale);
    checks.push((
        "coefficients within 5e-3 of print (relative)".into(),
        alpha_ok,
    ));
    let cross_ok = cross
        .iter()
        .zip(&demo::CROSS)
        .all(|(k, p)| (k - p).abs() <= 5e-3);
    checks.push(("cross-kernel within 5e-3 of print".into(), cross_ok));
    checks.push((
        "prediction within 0.1 dB of print".into(),
        (prediction - demo::PREDICTION).abs() <= 0.1,
    ));
    checks.push(("solve self-consistent to 1e-10".into(), residual <= 1e-10));

    Ok(DemoOutput {
        kernel: (0..3)
            .map(|i| (0..3).map(|j| g.get(i, j)).collect())
            .collect(),
        alpha,
        cross,
        prediction,
        residual,
        checks,
    })
}

fn demo_example3() -> Result<i32> {
    let out = run_demo_example3()?;
    println!("three-point worked example (lambda = {})", demo::LAMBDA);
    println!("kernel G:");
    for row in &out.kernel {
        println!("  [{:.6}, {:.6}, {:.6}]", row[0], row[1], row[2]);
    }
    println!(
        "alpha: [{:.6}, {:.6}, {:.6}]",
        out.alpha[0], out.alpha[1], out.alpha[2]
    );
    println!(
        "cross-kernel: [{:.6}, {:.6}, {:.6}]",
        out.cross[0], out.cross[1], out.cross[2]
    );
    println!("prediction: {:.4} dBm", out.prediction);
    println!("relative residual: {:.3e}", out.residual);
    let mut all_ok = true;
    for (name, ok) in &out.checks {
        println!("  [{}] {name}", if *ok { "ok" } else { "FAIL" });
        all_ok &= ok;
    }
    if all_ok {
        println!("PASS");
        Ok(0)
    } else {
        println!("FAIL");
        Ok(2)
    }
}

fn spectrum(n: usize, seed: u64) -> Result<i32> {
    if n == 0 {
        return Err(BenchError::Config("--n must be at least 1".into()));
    }
    let config = ExperimentConfig::default();
    let (_, _, _, sys) = crate::experiment::scene_ingredients(&config, n, seed)?;
    let dense = sys.regularized_matrix();
    let w = sym_eigenvalues(&dense)?;
    let kappa_raw = w[n - 1] / w[0];
    println!("n = {n}, lambda = {}", config.lambda);
    println!(
        "eigenvalues: min {:.6e}, median {:.6e}, max {:.6e}",
        w[0],
        w[n / 2],
        w[n - 1]
    );
    println!("kappa_raw = {kappa_raw:.6e}");

    let cccp = CccpConfig {
        gamma: config.gamma,
        seed: laker_core::rng::mix_seed(&[seed, n as u64, 1]),
        ..CccpConfig::default()
    };
    let (precond, report) = learn_preconditioner(&sys, &cccp)?;
    let kappa_pre = precond.kappa_preconditioned(&dense)?;
    println!(
        "learned preconditioner: N_r = {} (schedule {}), cccp iterations = {}, rho = {:.4}, converged = {}",
        report.nr_used,
        nr_schedule(n),
        report.iterations,
        report.rho_used,
        report.converged
    );
    println!("kappa_precond = {kappa_pre:.6e}");
    println!("reduction = {:.1}x", kappa_raw / kappa_pre);
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_checks_pass() {
        let out = run_demo_example3().unwrap();
        assert!(out.checks.iter().all(|(_, ok)| *ok), "{:?}", out.checks);
        assert!((out.prediction - demo::PREDICTION).abs() <= 0.1);
    }

    #[test]
    fn unknown_flags_exit_one() {
        assert_eq!(cli_main(["laker", "run", "--bogus"]), 1);
        assert_eq!(cli_main(["laker", "nonsense"]), 1);
    }

    #[test]
    fn missing_config_path_exits_one() {
        assert_eq!(
            cli_main(["laker", "run", "--config", "/nonexistent/config.json"]),
            1
        );
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(cli_main(["laker", "--help"]), 0);
    }
}
