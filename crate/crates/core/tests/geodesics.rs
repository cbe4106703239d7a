//! Geodesic distances against independent oracles: brute-force unfolding on
//! the cube and the Euclid ≤ geodesic ≤ Dijkstra sandwich.

use patchseg::geodesics::{dijkstra_edge_distances, full_distance_field, geodesic_ball, GeodesicBackend};
use patchseg::synthetic;
use patchseg::Vec3;

mod common;
use common::cube_geodesic;

#[test]
fn unfolding_oracle_known_values() {
    let d = cube_geodesic(Vec3::new(0.5, 0.5, 1.0), Vec3::new(0.5, 0.5, 0.0));
    assert!((d - 2.0).abs() < 1e-12);
    let d = cube_geodesic(Vec3::new(0.5, 0.5, 1.0), Vec3::new(1.0, 0.5, 0.5));
    assert!((d - 1.0).abs() < 1e-12);
    let d = cube_geodesic(Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 1.0, 0.0));
    assert!((d - 5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn cube_matches_unfolding_oracle() {
    let n = 5;
    let cube = synthetic::cube(n);
    // centers on the top face near an edge, on a side face, and on a cube edge
    let centers: Vec<usize> = [Vec3::new(0.4, 0.6, 1.0), Vec3::new(1.0, 0.2, 0.4), Vec3::new(0.6, 0.0, 1.0)]
        .iter()
        .map(|p| (0..cube.vertex_count()).find(|&v| (cube.vertex(v) - p).norm() < 1e-12).unwrap())
        .collect();
    for c in centers {
        let d = full_distance_field(&cube, c, GeodesicBackend::Exact).unwrap();
        let mut worst: f64 = 0.0;
        for v in 0..cube.vertex_count() {
            let oracle = cube_geodesic(cube.vertex(c), cube.vertex(v));
            worst = worst.max((d[v] - oracle).abs());
        }
        assert!(worst < 1e-7, "center {c}: worst error {worst:e}");
    }
}

#[test]
fn cube_path_crossing_one_edge_is_two_segments() {
    let cube = synthetic::cube(4);
    let find = |p: Vec3| (0..cube.vertex_count()).find(|&v| (cube.vertex(v) - p).norm() < 1e-12).unwrap();
    let c = find(Vec3::new(0.5, 0.5, 1.0));
    let v = find(Vec3::new(1.0, 0.5, 0.5));
    let ball = geodesic_ball(&cube, c, 2.0, GeodesicBackend::Exact).unwrap();
    let path = ball.trace_path(v).unwrap();
    let interior: Vec<Vec3> = path.points[1..path.points.len() - 1].to_vec();
    // straight after unfolding: the polyline passes through the cube edge midpoint
    assert!(interior.iter().any(|p| (p - Vec3::new(1.0, 0.5, 1.0)).norm() < 1e-9));
    assert!((path.length() - 1.0).abs() < 1e-9);
}

#[test]
fn sandwich_on_varied_meshes() {
    let meshes = common::varied_meshes();
    for (name, mesh) in &meshes {
        for center in [0, mesh.vertex_count() / 2] {
            let d = full_distance_field(mesh, center, GeodesicBackend::Exact).unwrap();
            let dj = dijkstra_edge_distances(mesh, center);
            for v in 0..mesh.vertex_count() {
                let e = (mesh.vertex(v) - mesh.vertex(center)).norm();
                assert!(d[v] >= e * (1.0 - 1e-12), "{name}: {v} below Euclid");
                assert!(d[v] <= dj[v] * (1.0 + 1e-12) + 1e-12, "{name}: {v} above Dijkstra");
            }
        }
    }
}

#[test]
fn traced_paths_have_ball_lengths() {
    let mesh = synthetic::jittered_sphere(1.0, 2, 0.08, 11);
    let ball = geodesic_ball(&mesh, 5, 1.2, GeodesicBackend::Exact).unwrap();
    for &(v, d) in ball.distances() {
        let p = ball.trace_path(v).unwrap();
        assert!((p.length() - d).abs() <= 1e-9 * d.max(1e-3), "v={v}: {} vs {d}", p.length());
        assert!((0.0..2.0 * std::f64::consts::PI).contains(&p.angle));
    }
}

#[test]
fn symmetric_on_random_pairs() {
    let mesh = synthetic::torus(1.0, 0.4, 24, 12);
    for (a, b) in [(0, 100), (7, 200), (33, 250)] {
        let da = full_distance_field(&mesh, a, GeodesicBackend::Exact).unwrap();
        let db = full_distance_field(&mesh, b, GeodesicBackend::Exact).unwrap();
        assert!((da[b] - db[a]).abs() < 1e-7 * da[b], "{a}-{b}: {} vs {}", da[b], db[a]);
    }
}
