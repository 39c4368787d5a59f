//! Compares a competing-risks model with a cause-specific one by the risk
//! bins they assign at a horizon, and by Brier differences across subgroups.

use nfg::data::{generate_synthetic, SyntheticSpec};
use nfg::metrics::event_quantiles;
use nfg::reclassification::{reclassification_matrix, render_group_diffs, subgroup_brier_diff, CohortFilter, FoldPair, Grouping, RiskBins};
use nfg::trainer::{train, HyperParams, TrainConfig};
use nfg::Variant;

fn main() -> nfg::Result<()> {
    let data = generate_synthetic(&SyntheticSpec { n: 3000, ..SyntheticSpec::default() })?;
    let (train_rows, test_rows): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|i| i % 3 != 0);
    let hp = HyperParams { batch_size: 250, ..HyperParams::default() };
    let fit = |variant| {
        let cfg = TrainConfig { max_epochs: 60, patience: 5, seed: 2, variant, ..TrainConfig::default() };
        train(&data, &train_rows, &hp, &cfg).map(|o| o.model)
    };
    let nfg_model = fit(Variant::Nfg)?;
    let cs_model = fit(Variant::CauseSpecific)?;

    let horizon = event_quantiles(&data.times, &data.events, &[0.5])?[0];
    let bins = RiskBins::default();
    let (free, event) = reclassification_matrix(&nfg_model, &cs_model, &data, &test_rows, horizon, 1, &bins, &CohortFilter::All)?;
    println!("risk 1 at t = {horizon:.4}; {}\n", bins.describe());
    println!("{}", free.render("NFG", "cause-specific"));
    println!("{}", event.render("NFG", "cause-specific"));

    let older = CohortFilter::AtLeast { column: "x1".into(), threshold: 0.0 };
    let (free, _) = reclassification_matrix(&nfg_model, &cs_model, &data, &test_rows, horizon, 1, &bins, &older)?;
    println!("{}", free.render("NFG", "cause-specific"));

    let grouping = Grouping { column: "x1".into(), edges: vec![-10.0, -1.0, 0.0, 1.0, 10.0] };
    let pair = [FoldPair { model_a: &nfg_model, model_b: &cs_model, rows: test_rows.clone() }];
    let diffs = subgroup_brier_diff(&pair, &data, &grouping, &[horizon], 1)?;
    print!("{}", render_group_diffs(&diffs));
    Ok(())
}
