//! Trains on a synthetic cohort and compares predicted incidence with the
//! generator's closed form on held-out patients.
//!
//! Usage: `synthetic_recovery [variant] [training patients]`

use std::time::Instant;

use nfg::data::{analytic_cif, analytic_nll, generate_synthetic, SyntheticSpec};
use nfg::metrics::{c_index_td, event_quantiles, Cohort, QUANTILE_LEVELS};
use nfg::objectives::loss_value;
use nfg::trainer::{train, HyperParams, TrainConfig};
use nfg::{Objective, SurvivalBatch, Variant};

const HELD_OUT: usize = 500;

fn main() -> nfg::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let variant = args.get(1).map(|s| Variant::parse(s)).transpose()?.unwrap_or(Variant::Nfg);
    let n_train: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10_000);

    let spec = SyntheticSpec { n: n_train + HELD_OUT, ..SyntheticSpec::default() };
    let data = generate_synthetic(&spec)?;
    println!("event counts {:?}", data.event_counts());
    let train_rows: Vec<usize> = (0..n_train).collect();
    let test_rows: Vec<usize> = (n_train..data.len()).collect();
    let hp = HyperParams { nodes: 50, ..HyperParams::default() };
    let cfg = TrainConfig { seed: 7, variant, ..TrainConfig::default() };
    let start = Instant::now();
    let out = train(&data, &train_rows, &hp, &cfg)?;
    println!(
        "trained {} epochs (best {}) in {:.1}s",
        out.log.records.len(),
        out.log.best_epoch,
        start.elapsed().as_secs_f64()
    );

    let model_nll = loss_value(&out.model, Objective::Competing, &SurvivalBatch::new(&data, &test_rows))?.total;
    let true_nll = analytic_nll(&spec, &data, &test_rows);
    let n = test_rows.len() as f64;
    println!("held-out nll per patient: model {:.4}, truth {:.4}", model_nll / n, true_nll / n);

    let sub = data.subset(&train_rows);
    let horizons = event_quantiles(&sub.times, &sub.events, &QUANTILE_LEVELS)?;
    let cohort = Cohort::from_rows(&data, &test_rows)?;
    for r in 1..=2 {
        let mut mae = [0.0; 3];
        let mut baseline = [0.0; 3];
        for (h, &t) in horizons.iter().enumerate() {
            let truth: Vec<f64> = test_rows.iter().map(|&i| analytic_cif(&spec, data.row(i), t, r)).collect();
            let mean = truth.iter().sum::<f64>() / n;
            baseline[h] = truth.iter().map(|f| (f - mean).abs()).sum::<f64>() / n;
            for (&i, f) in test_rows.iter().zip(&truth) {
                mae[h] += (out.model.cif(data.row(i), t)?.cif[r - 1] - f).abs() / n;
            }
        }
        let preds: Vec<f64> = test_rows
            .iter()
            .map(|&i| out.model.cif(data.row(i), horizons[0]).map(|e| e.cif[r - 1]))
            .collect::<nfg::Result<_>>()?;
        let oracle: Vec<f64> = test_rows.iter().map(|&i| analytic_cif(&spec, data.row(i), horizons[0], r)).collect();
        println!("risk {r}");
        println!("  mae at q25/q50/q75      {mae:.4?}");
        println!("  marginal predictor mae  {baseline:.4?}");
        println!(
            "  c-index at q25          {:.3} (analytic {:.3})",
            c_index_td(&cohort, &preds, r, horizons[0]).unwrap_or(f64::NAN),
            c_index_td(&cohort, &oracle, r, horizons[0]).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
