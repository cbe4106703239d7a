//! Exact geodesic balls: distances on the unit cube compared with straight
//! lines, and a traced shortest path that bends over a cube edge.
//!
//! ```text
//! cargo run --release --example geodesic_ball
//! ```

use patchseg::geodesics::{dijkstra_edge_distances, geodesic_ball, GeodesicBackend};
use patchseg::synthetic;
use patchseg::Vec3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cube = synthetic::cube(8);
    let find = |p: Vec3| (0..cube.vertex_count()).find(|&v| (cube.vertex(v) - p).norm() < 1e-12).unwrap();
    let center = find(Vec3::new(0.5, 0.5, 1.0));
    let ball = geodesic_ball(&cube, center, 1.2, GeodesicBackend::Exact)?;
    let dijkstra = dijkstra_edge_distances(&cube, center);
    println!("ball of radius 1.2 around the top-face center holds {} vertices", ball.len());
    println!("vertex\tposition\t\tgeodesic\teuclid\tedge-dijkstra");
    for &(v, d) in ball.distances().iter().step_by(ball.len() / 8) {
        let p = cube.vertex(v);
        let e = (p - cube.vertex(center)).norm();
        println!("{v}\t({:.2}, {:.2}, {:.2})\t{d:.6}\t{e:.6}\t{:.6}", p.x, p.y, p.z, dijkstra[v]);
    }
    let side = find(Vec3::new(1.0, 0.5, 0.5));
    let path = ball.trace_path(side)?;
    println!("\nshortest path to the side-face center (length {:.6}):", path.length());
    for p in &path.points {
        println!("  ({:.4}, {:.4}, {:.4})", p.x, p.y, p.z);
    }

    let steiner = geodesic_ball(&cube, center, 1.2, GeodesicBackend::Steiner { points_per_edge: 3 })?;
    let worst = ball
        .distances()
        .iter()
        .map(|&(v, d)| steiner.distance(v).map_or(0.0, |s| s - d))
        .fold(0.0, f64::max);
    println!("\nSteiner-graph backend (3 points per edge) overestimates by at most {worst:.4}");
    Ok(())
}
