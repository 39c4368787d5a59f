//! Five-fold cross-validation with a small random hyperparameter search in
//! each fold, printed as a table of `mean (sd)` cells.
//!
//! `cargo run --release --example cross_validation -- [n] [trials]`

use nfg::data::{generate_synthetic, SyntheticSpec};
use nfg::trainer::{cross_validate, CvConfig, HyperGrid, TrainConfig};

fn main() -> nfg::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(2000);
    let trials = args.get(1).copied().unwrap_or(2);
    let data = generate_synthetic(&SyntheticSpec { n, ..SyntheticSpec::default() })?;
    let cfg = CvConfig {
        folds: 5,
        n_trials: trials,
        grid: HyperGrid {
            learning_rates: vec![1e-3],
            batch_sizes: vec![100, 250],
            dropouts: vec![0.0],
            layers: vec![1, 2],
            nodes: vec![25, 50],
        },
        train: TrainConfig { max_epochs: 60, patience: 5, seed: 17, ..TrainConfig::default() },
        horizons: None,
        jobs: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let out = cross_validate(&data, &cfg)?;
    for f in &out.folds {
        println!(
            "fold {}: {} train / {} test, trial {} won with {:?}",
            f.fold, f.train_size, f.test_size, f.best_trial, f.hyper_params
        );
    }
    println!();
    print!("{}", out.aggregate.render_table());
    Ok(())
}
