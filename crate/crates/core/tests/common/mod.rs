//! Shared oracles and fixtures for integration tests.
#![allow(dead_code)]

use nalgebra::Matrix3;
use patchseg::synthetic::{self, FigureParams, LabeledFigure};
use patchseg::{TriMesh, Vec3};

/// Faces of the unit cube `[0,1]³` as `(normal axis, level)`.
const CUBE_FACES: [(usize, f64); 6] = [(0, 0.0), (0, 1.0), (1, 0.0), (1, 1.0), (2, 0.0), (2, 1.0)];

fn normal(face: (usize, f64)) -> Vec3 {
    let mut n = Vec3::zeros();
    n[face.0] = if face.1 > 0.5 { 1.0 } else { -1.0 };
    n
}

fn on_face(p: Vec3, face: (usize, f64)) -> bool {
    (p[face.0] - face.1).abs() < 1e-12
}

/// Exact geodesic distance between two points on the unit cube surface,
/// by brute force over every simple face sequence and its planar unfolding.
pub fn cube_geodesic(src: Vec3, dst: Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for (i, &f) in CUBE_FACES.iter().enumerate() {
        if on_face(src, f) {
            let mut visited = [false; 6];
            visited[i] = true;
            unfold(src, dst, f, i, Matrix3::identity(), Vec3::zeros(), &mut Vec::new(), &mut visited, &mut best);
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn unfold(
    src: Vec3,
    dst: Vec3,
    first: (usize, f64),
    cur: usize,
    m: Matrix3<f64>,
    t: Vec3,
    edges: &mut Vec<(Vec3, Vec3)>,
    visited: &mut [bool; 6],
    best: &mut f64,
) {
    let f = CUBE_FACES[cur];
    if on_face(dst, f) {
        let img = m * dst + t;
        if edges.iter().all(|&(e0, e1)| crosses(src, img, e0, e1, first.0)) {
            *best = best.min((img - src).norm());
        }
    }
    for (j, &g) in CUBE_FACES.iter().enumerate() {
        if visited[j] || g.0 == f.0 {
            continue;
        }
        // shared edge: coordinate f.0 = f.1, g.0 = g.1, third axis free
        let free = 3 - f.0 - g.0;
        let mut q0 = Vec3::zeros();
        q0[f.0] = f.1;
        q0[g.0] = g.1;
        let mut q1 = q0;
        q1[free] = 1.0;
        let axis = normal(g).cross(&normal(f));
        let rot = Matrix3::from_columns(&[0, 1, 2].map(|i| {
            let mut e = Vec3::zeros();
            e[i] = 1.0;
            axis * axis.dot(&e) + axis.cross(&e)
        }));
        let m2 = m * rot;
        let t2 = m * (q0 - rot * q0) + t;
        edges.push((m * q0 + t, m * q1 + t));
        visited[j] = true;
        unfold(src, dst, first, j, m2, t2, edges, visited, best);
        visited[j] = false;
        edges.pop();
    }
}

/// Whether segment `a → b` crosses segment `e0 → e1` in the plane normal to `axis`.
fn crosses(a: Vec3, b: Vec3, e0: Vec3, e1: Vec3, axis: usize) -> bool {
    let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
    let d = (b[i] - a[i], b[j] - a[j]);
    let e = (e1[i] - e0[i], e1[j] - e0[j]);
    let w = (e0[i] - a[i], e0[j] - a[j]);
    let den = d.0 * e.1 - d.1 * e.0;
    if den.abs() < 1e-15 {
        return false;
    }
    let t = (w.0 * e.1 - w.1 * e.0) / den;
    let u = (w.0 * d.1 - w.1 * d.0) / den;
    (-1e-12..=1.0 + 1e-12).contains(&t) && (-1e-9..=1.0 + 1e-9).contains(&u)
}

/// Five structurally different meshes for property tests.
pub fn varied_meshes() -> Vec<(&'static str, TriMesh)> {
    vec![
        ("jittered_sphere", synthetic::jittered_sphere(1.0, 2, 0.1, 1)),
        ("torus", synthetic::torus(1.0, 0.35, 20, 10)),
        ("capsule", synthetic::capsule(0.3, 0.8, 16, 4, 8)),
        ("cube", synthetic::cube(4)),
        ("bent_strip", synthetic::strip_pair(2.0, 0.5, 16, 4, 0.8).1),
    ]
}

/// A coarse labeled figure for fast tests.
pub fn small_figure(seed: u64) -> LabeledFigure {
    LabeledFigure::generate("fixture", seed, &FigureParams { spacing: 0.05, ..FigureParams::default() })
}

/// Strongly sheared, bumpy sheet whose long-diagonal triangles give negative
/// cotangent weights: many harmonic maps on it fold over.
pub fn folding_sheet() -> TriMesh {
    use rand::{Rng, SeedableRng};
    let g = synthetic::grid(30, 30, 0.1);
    g.map_vertices(|p| {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64((p.x * 1000.0 + p.y * 7.0) as u64);
        Vec3::new(p.x - 0.95 * p.y, 0.2 * p.y, r.gen_range(-0.2..0.2))
    })
    .unwrap()
}
