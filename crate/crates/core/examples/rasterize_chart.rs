//! Rasterizes one vertex chart into a regular grid and prints the mask and
//! one interpolated descriptor channel as ASCII art.
//!
//! ```text
//! cargo run --release --example rasterize_chart [-- <vertex> <resolution>]
//! ```

use patchseg::features::{chart_vertex, PipelineConfig};
use patchseg::geodesics::patch_radius;
use patchseg::linalg::SolverKind;
use patchseg::param::solve_flow_field;
use patchseg::rasterize::sample_features;
use patchseg::synthetic::{FigureParams, LabeledFigure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let fig = LabeledFigure::generate("demo", 3, &FigureParams { spacing: 0.05, ..Default::default() });
    let mesh = &fig.mesh;
    let v: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let res: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(24);
    let cfg = PipelineConfig { resolution: res, ..Default::default() };
    let flow = solve_flow_field(mesh, &fig.sources, &fig.sinks, SolverKind::Cholesky)?;
    let vc = chart_vertex(mesh, v, patch_radius(mesh, cfg.m), &flow, &cfg)?;
    println!(
        "vertex {v}: {:?} chart, aligned {}, radius {:.4}, {} of {} cells inside the patch",
        vc.method,
        vc.aligned,
        vc.radius,
        vc.chart.valid_count(),
        res * res
    );
    // height above the lowest vertex as a stand-in descriptor
    let zmin = mesh.vertices().iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let height: Vec<f64> = mesh.vertices().iter().map(|p| p.z - zmin).collect();
    let grid = sample_features(&vc.chart, &height, 1, mesh.vertex_count())?;
    let (lo, hi) = grid.data[..res * res]
        .iter()
        .zip(&vc.chart.cells)
        .filter(|(_, c)| c.is_valid())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (&x, _)| (a.min(x), b.max(x)));
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    println!("\nmask{}height", " ".repeat(2 * res - 3));
    for j in (0..res).rev() {
        let mask: String = (0..res).map(|i| if grid.at(1, i, j) > 0.0 { "██" } else { "··" }).collect();
        let h: String = (0..res)
            .map(|i| {
                if grid.at(1, i, j) == 0.0 {
                    return "  ".to_string();
                }
                let t = ((grid.at(0, i, j) - lo) / (hi - lo).max(1e-12) * 9.0).round() as usize;
                shades[t].to_string().repeat(2)
            })
            .collect();
        println!("{mask}  {h}");
    }
    Ok(())
}
