//! Time-dependent C-index, Brier score and AUC on a small hand-made cohort,
//! next to the brute-force transcriptions used as test oracles.

use nfg::metrics::{auc_td, brier_td, c_index_td, event_quantiles, Cohort, KaplanMeier};
use nfg::verification::brute_force_metrics;

fn main() -> nfg::Result<()> {
    let times = vec![1.0, 2.0, 2.5, 3.0, 4.0, 5.0, 6.5, 8.0];
    let events = vec![1, 0, 2, 1, 0, 1, 2, 0];
    let predicted = vec![0.62, 0.30, 0.41, 0.48, 0.15, 0.33, 0.20, 0.05];
    let horizon = 4.5;

    let censoring = KaplanMeier::fit(&times, &events.iter().map(|&e| e == 0).collect::<Vec<_>>())?;
    println!("censoring survival G(4.5) = {:.4}", censoring.survival_at(horizon));

    let cohort = Cohort::new(times.clone(), events.clone())?;
    let brute = brute_force_metrics(&predicted, &times, &events, 1, horizon);
    println!("{:<8} {:>10} {:>12}", "metric", "library", "brute force");
    let show = |name: &str, lib: nfg::metrics::MetricValue, bf: Result<f64, &str>| {
        let fmt = |v: Result<f64, String>| v.map(|v| format!("{v:.6}")).unwrap_or_else(|e| e);
        println!("{name:<8} {:>10} {:>12}", fmt(lib.map_err(|e| e.to_string())), fmt(bf.map_err(String::from)));
    };
    show("C-index", c_index_td(&cohort, &predicted, 1, horizon), brute.c_index);
    show("Brier", brier_td(&cohort, &predicted, 1, horizon), brute.brier);
    show("AUC", auc_td(&cohort, &predicted, 1, horizon), brute.auc);

    let q = event_quantiles(&times, &events, &[0.25, 0.5, 0.75])?;
    println!("event-time quartiles {q:?}");
    Ok(())
}
