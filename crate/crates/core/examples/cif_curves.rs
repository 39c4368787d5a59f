//! Cumulative incidence, densities and hazards from an untrained model.
//!
//! Shows the structural guarantees of the parameterisation: `F_r(0) = 0`,
//! monotone curves and incidences that never sum past one.

use nfg::{Architecture, NfgModel, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> nfg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let arch = Architecture { layers: 2, nodes: 16, dropout: 0.0 };
    let mut model = NfgModel::new(Variant::Nfg, 2, 3, arch, &mut rng)?;
    model.set_t_scale(10.0)?;
    println!("{} parameters", model.param_count());

    let x = [0.4, -1.2, 0.3];
    let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
    println!("{:>5} {:>10} {:>10} {:>10} {:>12} {:>12}", "t", "F_1", "F_2", "S", "dF_1/dt", "h_1");
    for (t, eval) in times.iter().zip(model.cif_curve(&x, &times)?) {
        let density = eval.density.as_deref().unwrap_or(&[]);
        let hazard = if *t > 0.0 { model.sub_hazard(&x, *t)?[0] } else { f64::NAN };
        println!(
            "{t:>5.1} {:>10.5} {:>10.5} {:>10.5} {:>12.5} {:>12.5}",
            eval.cif[0], eval.cif[1], eval.survival, density[0], hazard
        );
    }

    // The cause-specific variant reports hazards that ignore competition.
    let cs = NfgModel::new(Variant::CauseSpecific, 2, 3, arch, &mut rng)?;
    for (r, e) in cs.cause_specific_eval(&x, 0.5)?.iter().enumerate() {
        println!(
            "cause-specific risk {}: Λ = {:.4}, λ = {:.4}, exp(−Λ) = {:.4}",
            r + 1,
            e.cumulative_hazard,
            e.hazard,
            e.survival
        );
    }
    Ok(())
}
