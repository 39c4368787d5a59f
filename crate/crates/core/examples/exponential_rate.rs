//! Fits a single-risk model to exponential event times and compares the
//! learned hazard with the closed-form maximum-likelihood rate.

use nfg::trainer::{train, HyperParams, TrainConfig};
use nfg::SurvivalDataset;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

fn main() -> nfg::Result<()> {
    let rate = 0.5;
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let exp = Exp::new(rate).expect("positive rate");
    let times: Vec<f64> = (0..n).map(|_| exp.sample(&mut rng)).collect();
    let mle = n as f64 / times.iter().sum::<f64>();
    // a single uninformative covariate
    let x: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
    let data = SurvivalDataset::new(x, times, vec![1; n], vec!["noise".into()], 1)?;

    let hp = HyperParams { learning_rate: 1e-3, batch_size: 100, dropout: 0.0, layers: 1, nodes: 25 };
    let cfg = TrainConfig { max_epochs: 200, patience: 10, seed: 1, risks: 1, ..TrainConfig::default() };
    let rows: Vec<usize> = (0..n).collect();
    let out = train(&data, &rows, &hp, &cfg)?;

    let probe: Vec<f64> = (1..=20).map(|k| k as f64 * 0.1).collect();
    let mut hazard = 0.0;
    for &t in &probe {
        hazard += out.model.sub_hazard(&[3.0], t)?[0] / probe.len() as f64;
    }
    println!("trained {} epochs, best {}", out.log.records.len(), out.log.best_epoch);
    println!("mean learned hazard {hazard:.4}, MLE {mle:.4}, generating rate {rate}");
    Ok(())
}
