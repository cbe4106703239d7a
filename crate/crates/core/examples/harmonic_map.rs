//! Harmonic disk map of one geodesic patch on a capsule figure: boundary on
//! the unit circle, harmonic residual, orientation, and a text dump of the
//! chart (`vertex x y` lines) suitable for plotting.
//!
//! ```text
//! cargo run --release --example harmonic_map [-- <vertex> <out.txt>]
//! ```

use patchseg::geodesics::{geodesic_ball, patch_radius, GeodesicBackend};
use patchseg::linalg::SolverKind;
use patchseg::param::{extract_patch, harmonic_map, harmonic_residual};
use patchseg::synthetic::{FigureParams, LabeledFigure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let fig = LabeledFigure::generate("demo", 1, &FigureParams { spacing: 0.05, ..Default::default() });
    let mesh = &fig.mesh;
    let center: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(mesh.vertex_count() / 2);
    // a larger patch than the pipeline default makes a more interesting picture
    let radius = 4.0 * patch_radius(mesh, 1000);
    let ball = geodesic_ball(mesh, center, radius, GeodesicBackend::Exact)?;
    let patch = extract_patch(&ball)?;
    println!("patch around vertex {center}: {} vertices, topological disk: {}", patch.sub.vertex_ids().len(), patch.is_disk);
    let param = harmonic_map(&patch, SolverKind::Cholesky)?;
    let boundary = patch.sub.boundary_loops()?.concat();
    let circle = boundary
        .iter()
        .map(|&v| (param.coords[patch.sub.local_index(v).unwrap()].norm() - 1.0).abs())
        .fold(0.0, f64::max);
    println!("boundary vertices: {}, max | |μ| − 1 | = {circle:.2e}", boundary.len());
    println!("max harmonic residual: {:.2e}", harmonic_residual(&patch, &param));
    println!("folded faces present: {}", param.folded);
    if let Some(out) = args.get(1) {
        let mut buf = Vec::new();
        param.write_debug(&patch.sub, &mut buf)?;
        std::fs::write(out, buf)?;
        println!("chart written to {out}");
    }
    Ok(())
}
