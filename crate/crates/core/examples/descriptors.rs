//! Per-vertex descriptors (26 WKS bands, 4 curvatures, AGD = 31 channels)
//! on two figures, followed by global min–max normalization.
//!
//! ```text
//! cargo run --release --example descriptors
//! ```

use patchseg::descriptors::{normalize_global, DescriptorConfig, DescriptorSet, FeatureSet};
use patchseg::synthetic::{figure_corpus, FigureParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let figs = figure_corpus(2, 5, &FigureParams { spacing: 0.065, ..Default::default() });
    let cfg = DescriptorConfig { eigenpairs: 60, agd_samples: 16, ..Default::default() };
    let features = FeatureSet::all();
    println!("channels: {}", features.channel_names(cfg.bands).join(" "));
    let mut sets = Vec::new();
    for f in &figs {
        let t = std::time::Instant::now();
        sets.push(DescriptorSet::compute(&f.mesh, &cfg)?);
        println!("{}: {} vertices, descriptors in {:.1} s", f.name, f.mesh.vertex_count(), t.elapsed().as_secs_f64());
    }
    let stats = normalize_global(&mut sets, &features)?;
    println!("\nnormalization stats (family, min, max):\n{}", stats.to_text());
    let labels = figs[0].mesh.labels().unwrap();
    let width = features.channel_count(cfg.bands);
    let m = sets[0].matrix(&features);
    println!("label\tWKS[0]\tWKS[25]\tmean H\tGauss K\tAGD");
    for v in (0..figs[0].mesh.vertex_count()).step_by(400) {
        let row = &m[v * width..(v + 1) * width];
        println!("{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}", labels[v], row[0], row[25], row[28], row[29], row[30]);
    }
    Ok(())
}
