//! Trains the reference network on a separable toy problem (the label is
//! the row of a bright horizontal band) and saves / reloads the model.
//!
//! ```text
//! cargo run --release --example train_toy [-- <epochs>]
//! ```

use patchseg::classifier::{load_model, save_model, train, ClassifierConfig, MemorySource};
use rand::{Rng, SeedableRng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let (res, ch) = (8, 2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut grids = Vec::new();
    let mut labels = Vec::new();
    for i in 0..400 {
        let l = i % 8;
        let mut g: Vec<f32> = (0..ch * res * res).map(|_| rng.gen_range(0.0..1.0)).collect();
        for y in 0..res {
            for x in 0..res {
                g[y * res + x] = if y * 8 / res == l { 1.0 } else { 0.0 };
            }
        }
        grids.push(g);
        labels.push(l as u8);
    }
    let data = MemorySource { channels: ch, resolution: res, grids: grids.clone(), labels: labels.clone() };
    let cfg = ClassifierConfig { epochs, per_label: 2000, ..Default::default() };
    println!("architecture: {}", cfg.arch);
    let (model, report) = train(&data, &cfg, "", |_, _| Ok(()))?;
    print!("{}", report.to_text());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("toy.pgmd");
    save_model(&model, &path)?;
    let back = load_model(&path, Some(&model.config_hash))?;
    let predicted = back.predict_labels(&grids)?;
    let correct = predicted.iter().zip(&labels).filter(|(p, l)| p == l).count();
    println!("reloaded model: {correct}/{} correct", labels.len());
    Ok(())
}
