// Debug: which eigendecomposition stalls in the failing cell.
use laker_bench::config::ExperimentConfig;
use laker_bench::experiment::scene_ingredients;
use laker_core::precond::{learn_preconditioner, CccpConfig};
use laker_core::rng::mix_seed;

fn main() {
    let config = ExperimentConfig::default();
    let (_, _, _, sys) = scene_ingredients(&config, 1000, 2).unwrap();
    let cccp = CccpConfig {
        gamma: config.gamma,
        seed: mix_seed(&[2, 1000, 1]),
        ..CccpConfig::default()
    };
    println!("learning...");
    match learn_preconditioner(&sys, &cccp) {
        Ok((p, rep)) => {
            println!("learn ok: {rep:?}");
            println!("kappa...");
            match p.kappa_preconditioned(&sys.regularized_matrix()) {
                Ok(k) => println!("kappa = {k}"),
                Err(e) => println!("kappa failed: {e}"),
            }
        }
        Err(e) => println!("learn failed: {e}"),
    }
}
