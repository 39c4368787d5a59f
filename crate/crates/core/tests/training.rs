use nfg::data::{analytic_nll, generate_synthetic, SyntheticSpec};
use nfg::metrics::{aggregate, evaluate, event_quantiles};
use nfg::objectives::loss_value;
use nfg::trainer::{random_search, train, HyperGrid, HyperParams, TrainConfig};
use nfg::{Objective, SurvivalBatch, SurvivalDataset, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

fn exponential_toy(n: usize, seed: u64) -> SurvivalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(0.5).unwrap();
    let times: Vec<f64> = (0..n).map(|_| exp.sample(&mut rng)).collect();
    let x: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64).collect();
    SurvivalDataset::new(x, times, vec![1; n], vec!["noise".into()], 1).unwrap()
}

#[test]
fn training_loss_falls_over_the_first_epochs() {
    let data = exponential_toy(600, 1);
    let rows: Vec<usize> = (0..data.len()).collect();
    let hp = HyperParams { nodes: 10, ..HyperParams::default() };
    let cfg = TrainConfig { max_epochs: 5, patience: 10, seed: 2, risks: 1, ..TrainConfig::default() };
    let out = train(&data, &rows, &hp, &cfg).unwrap();
    let nll: Vec<f64> = out.log.records.iter().map(|r| r.train_nll).collect();
    assert_eq!(nll.len(), 5);
    assert!(nll.windows(2).all(|w| w[1] < w[0]), "{nll:?}");
}

#[test]
fn restored_epoch_has_the_best_validation_loss() {
    let data = generate_synthetic(&SyntheticSpec { n: 600, seed: 5, ..SyntheticSpec::default() }).unwrap();
    let rows: Vec<usize> = (0..data.len()).collect();
    let hp = HyperParams { nodes: 12, batch_size: 50, learning_rate: 1e-3, ..HyperParams::default() };
    let cfg = TrainConfig { max_epochs: 40, patience: 3, seed: 4, ..TrainConfig::default() };
    let out = train(&data, &rows, &hp, &cfg).unwrap();
    let best = out.log.best().unwrap();
    let last = out.log.records.last().unwrap();
    assert!(best.validation_nll <= last.validation_nll);
    assert!(out.log.records.iter().all(|r| best.validation_nll <= r.validation_nll));
    assert_eq!(best.epoch, out.log.best_epoch);
}

#[test]
fn every_variant_trains_and_evaluates() {
    let data = generate_synthetic(&SyntheticSpec { n: 400, seed: 6, ..SyntheticSpec::default() }).unwrap();
    let (fit, test): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|i| i % 4 != 0);
    let horizons = event_quantiles(&data.times, &data.events, &[0.25, 0.5, 0.75]).unwrap();
    let mut reports = Vec::new();
    for variant in [Variant::Nfg, Variant::MonoFg, Variant::CauseSpecific] {
        let cfg = TrainConfig { max_epochs: 10, patience: 3, seed: 1, variant, ..TrainConfig::default() };
        let hp = HyperParams { nodes: 10, ..HyperParams::default() };
        let out = train(&data, &fit, &hp, &cfg).unwrap();
        assert_eq!(out.model.variant, variant);
        let report = evaluate(&out.model, &data, &test, &horizons).unwrap();
        assert_eq!(report.risks.len(), 2);
        reports.push(report);
    }
    let agg = aggregate(&reports);
    let c = agg.get(1, "c_index", "q50").unwrap();
    assert_eq!(c.available_folds, 3);
    assert!(c.mean.unwrap() > 0.0 && c.mean.unwrap() < 1.0);
}

#[test]
fn search_is_reproducible_and_picks_the_lowest_validation_loss() {
    let data = generate_synthetic(&SyntheticSpec { n: 300, seed: 8, ..SyntheticSpec::default() }).unwrap();
    let rows: Vec<usize> = (0..data.len()).collect();
    let grid = HyperGrid { nodes: vec![4, 8], dropouts: vec![0.0, 0.25], layers: vec![1, 2], ..HyperGrid::default() };
    let cfg = TrainConfig { max_epochs: 6, patience: 2, seed: 3, ..TrainConfig::default() };
    let a = random_search(&data, &rows, &grid, 4, &cfg, 10, 1).unwrap();
    let b = random_search(&data, &rows, &grid, 4, &cfg, 10, 2).unwrap();
    assert_eq!(a.trials, b.trials);
    assert_eq!(a.best_index, b.best_index);
    let best = a.trials[a.best_index].validation_nll;
    assert!(a.trials.iter().all(|t| best <= t.validation_nll));
    assert_eq!(a.trials.iter().position(|t| t.validation_nll == best), Some(a.best_index));
}

/// The generating distribution scores at least as well as a trained model on
/// held-out patients, up to two standard errors over resamples.
#[test]
fn true_distribution_beats_a_trained_model() {
    let spec = SyntheticSpec { n: 3000, seed: 12, ..SyntheticSpec::default() };
    let data = generate_synthetic(&spec).unwrap();
    let fit: Vec<usize> = (0..2000).collect();
    let held: Vec<usize> = (2000..3000).collect();
    let hp = HyperParams { nodes: 25, batch_size: 100, ..HyperParams::default() };
    let cfg = TrainConfig { max_epochs: 60, patience: 5, seed: 2, ..TrainConfig::default() };
    let model = train(&data, &fit, &hp, &cfg).unwrap().model;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let diffs: Vec<f64> = (0..20)
        .map(|_| {
            let sample: Vec<usize> = (0..held.len()).map(|_| held[rand::Rng::random_range(&mut rng, 0..held.len())]).collect();
            let model_nll = loss_value(&model, Objective::Competing, &SurvivalBatch::new(&data, &sample)).unwrap().total;
            (model_nll - analytic_nll(&spec, &data, &sample)) / sample.len() as f64
        })
        .collect();
    let mean = diffs.iter().sum::<f64>() / 20.0;
    let se = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
    assert!(mean >= -2.0 * se, "model beats the truth: mean gap {mean}, se {se}");
}
