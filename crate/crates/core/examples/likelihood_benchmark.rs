//! Wall time of the closed-form likelihood against a quadrature likelihood
//! that integrates the density at n nodes for every censored patient.

use nfg::data::{generate_synthetic, SyntheticSpec};
use nfg::trainer::HyperParams;
use nfg::verification::likelihood_cost_benchmark;
use nfg::{NfgModel, SurvivalBatch, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> nfg::Result<()> {
    let data = generate_synthetic(&SyntheticSpec { n: 100, ..SyntheticSpec::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = NfgModel::new(Variant::Nfg, 2, data.n_features(), HyperParams::default().architecture(), &mut rng)?;
    model.set_t_scale(data.max_event_time())?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let report = likelihood_cost_benchmark(&model, &SurvivalBatch::new(&data, &rows), &[1, 15, 100], 15)?;
    println!("batch of {} patients, {} censored\n", report.batch_size, report.censored);
    print!("{}", report.render_table());
    Ok(())
}
