//! Flow field from head to toes on a figure, and chart alignment: after
//! calibration the projected flow at every patch center points along +x,
//! so charts of the same body region line up regardless of how the
//! parameterization happened to be rotated.
//!
//! ```text
//! cargo run --release --example flow_alignment
//! ```

use patchseg::geodesics::{geodesic_ball, patch_radius, GeodesicBackend};
use patchseg::linalg::SolverKind;
use patchseg::param::{align, calibration, extract_patch, harmonic_map, solve_flow_field};
use patchseg::synthetic::{FigureParams, LabeledFigure};
use patchseg::Vec2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fig = LabeledFigure::generate("demo", 2, &FigureParams { spacing: 0.05, ..Default::default() });
    let mesh = &fig.mesh;
    let flow = solve_flow_field(mesh, &fig.sources, &fig.sinks, SolverKind::Cholesky)?;
    println!("sources {:?} (head), sinks {:?} (toes)", fig.sources, fig.sinks);
    let (lo, hi) = flow.u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &u| (a.min(u), b.max(u)));
    println!("potential range [{lo}, {hi}] (maximum principle)");

    let radius = 3.0 * patch_radius(mesh, 1000);
    println!("\nvertex\tBaseToRef\tAxisToBase\tcalibration angle");
    for v in (0..mesh.vertex_count()).step_by(mesh.vertex_count() / 6) {
        let ball = geodesic_ball(mesh, v, radius, GeodesicBackend::Exact)?;
        let patch = extract_patch(&ball)?;
        if !patch.is_disk {
            continue;
        }
        let param = harmonic_map(&patch, SolverKind::Cholesky)?;
        let Some(cal) = calibration(&param, &patch, &flow) else { continue };
        let aligned = align(&param, &patch, &flow);
        println!("{v}\t{:+.4}\t\t{:+.4}\t\t{:.4}", cal.base_to_ref, cal.axis_to_base, aligned.calibration_angle);
        // a pre-rotated chart aligns to exactly the same coordinates
        let mut spun = param.clone();
        for p in spun.coords.iter_mut() {
            *p = Vec2::new(-p.y, p.x);
        }
        assert_eq!(align(&spun, &patch, &flow).coords, aligned.coords);
    }
    println!("\npre-rotated charts aligned bit-identically");
    Ok(())
}
