//! Geodesic polar map: the fallback chart for patches that are not
//! topological disks (here a patch that wraps all the way around a thin
//! cylinder) or whose harmonic map folds over.
//!
//! ```text
//! cargo run --release --example polar_map
//! ```

use patchseg::geodesics::{geodesic_ball, GeodesicBackend};
use patchseg::param::{extract_patch, geodesic_polar_map};
use patchseg::synthetic;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tube = synthetic::cylinder(0.1, 2.0, 16, 40);
    let center = 20 * 16;
    let ball = geodesic_ball(&tube, center, 0.5, GeodesicBackend::Exact)?;
    let patch = extract_patch(&ball)?;
    println!(
        "patch: {} vertices, {} boundary loops, topological disk: {}",
        patch.sub.vertex_ids().len(),
        patch.sub.boundary_loops()?.len(),
        patch.is_disk
    );
    let polar = geodesic_polar_map(&patch);
    let charted = polar.valid.iter().filter(|&&v| v).count();
    println!("polar chart covers {charted} of {} vertices", polar.valid.len());
    println!("vertex\tgeodesic r\tchart radius\tchart angle");
    for (i, &v) in patch.sub.vertex_ids().iter().enumerate().step_by(12) {
        let p = polar.coords[i];
        println!("{v}\t{:.4}\t\t{:.4}\t\t{:.4}", ball.distance(v).unwrap(), p.norm(), p.y.atan2(p.x));
    }
    Ok(())
}
