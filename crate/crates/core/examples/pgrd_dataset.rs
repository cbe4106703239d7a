//! Streams vertex charts of a figure into a PGRD container, reopens it,
//! and draws one class-balanced training epoch from it.
//!
//! ```text
//! cargo run --release --example pgrd_dataset
//! ```

use patchseg::descriptors::{DescriptorConfig, DescriptorSet, FeatureSet, NormStats};
use patchseg::features::{balanced_epoch_sampler, process_mesh, PgrdReader, PgrdWriter, PipelineConfig};
use patchseg::linalg::SolverKind;
use patchseg::param::solve_flow_field;
use patchseg::synthetic::{FigureParams, LabeledFigure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fig = LabeledFigure::generate("demo", 4, &FigureParams { spacing: 0.065, ..Default::default() });
    let mesh = &fig.mesh;
    let dcfg = DescriptorConfig { eigenpairs: 40, agd_samples: 8, ..Default::default() };
    let features = FeatureSet::all();
    let mut set = DescriptorSet::compute(mesh, &dcfg)?;
    NormStats::from_collection(std::slice::from_ref(&set), &features)?.apply(&mut set);
    let width = features.channel_count(dcfg.bands);
    let cfg = PipelineConfig { resolution: 16, ..Default::default() };
    let flow = solve_flow_field(mesh, &fig.sources, &fig.sinks, SolverKind::Cholesky)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("demo.pgrd");
    let mut writer = PgrdWriter::create(&path, cfg.resolution, width + 1, true, 0)?;
    let summary = process_mesh(&fig.name, mesh, &set.matrix(&features), width, &flow, &cfg, |r| writer.push(&r))?;
    let header = writer.finish()?;
    println!(
        "wrote {} records ({} polar charts, {} skipped), {} bytes",
        header.records,
        summary.polar,
        summary.skipped.len(),
        std::fs::metadata(&path)?.len()
    );

    let reader = PgrdReader::open(&path)?;
    let labels: Vec<u8> = (0..reader.len()).map(|i| reader.label(i)).collect();
    let mut per_label = [0usize; 8];
    for &l in &labels {
        per_label[l as usize] += 1;
    }
    println!("records per label: {per_label:?}");
    let epoch = balanced_epoch_sampler(&labels, 200, 1, 0)?;
    let mut drawn = [0usize; 8];
    for &i in &epoch {
        drawn[labels[i] as usize] += 1;
    }
    println!("balanced epoch of {} records: {drawn:?}", epoch.len());
    let r = reader.read(epoch[0])?;
    println!("first record: vertex {}, label {:?}, {} floats", r.vertex, r.label, r.data.len());
    Ok(())
}
