//! Saves a model to the binary checkpoint format and reloads it.

use nfg::model::{checkpoint_load, checkpoint_save, encode_checkpoint};
use nfg::{Architecture, NfgModel, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> nfg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut model = NfgModel::new(Variant::MonoFg, 2, 4, Architecture { layers: 1, nodes: 8, dropout: 0.0 }, &mut rng)?;
    model.set_standardization(vec![50.0, 1.0, 0.0, 120.0], vec![10.0, 0.5, 1.0, 15.0])?;
    model.set_t_scale(24.0)?;

    let path = std::env::temp_dir().join("nfg-example.nfg");
    checkpoint_save(&model, &path)?;
    let restored = checkpoint_load(&path)?;
    let x = [55.0, 1.2, 0.0, 130.0];
    println!("{} bytes written to {}", encode_checkpoint(&model).len(), path.display());
    println!("F(12 | x) before {:?}", model.cif(&x, 12.0)?.cif);
    println!("F(12 | x) after  {:?}", restored.cif(&x, 12.0)?.cif);
    println!("identical bytes: {}", encode_checkpoint(&model) == encode_checkpoint(&restored));
    let _ = std::fs::remove_file(&path);
    Ok(())
}
