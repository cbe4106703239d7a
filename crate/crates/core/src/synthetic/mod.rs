//! Procedural meshes: analytic test shapes and articulated capsule figures.

mod figure;

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{TriMesh, Vec3};

pub use figure::{figure_corpus, FigureParams, LabeledFigure, PartLabel};

fn build(verts: Vec<Vec3>, faces: Vec<[usize; 3]>) -> TriMesh {
    TriMesh::new(verts, faces).expect("generator produced an invalid mesh")
}

/// Flat `nx × ny` grid of square cells with side `cell`, normal +z.
pub fn grid(nx: usize, ny: usize, cell: f64) -> TriMesh {
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            verts.push(Vec3::new(i as f64 * cell, j as f64 * cell, 0.0));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    build(verts, faces)
}

/// Regular tetrahedron with the given edge length.
pub fn regular_tetrahedron(edge: f64) -> TriMesh {
    let s = edge / (2.0 * 2f64.sqrt());
    let verts = vec![
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ];
    build(verts, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
}

/// Regular hexagon fan: one center vertex and six ring vertices at radius `r`.
pub fn hexagon(r: f64) -> TriMesh {
    let mut verts = vec![Vec3::zeros()];
    for k in 0..6 {
        let a = k as f64 * PI / 3.0;
        verts.push(Vec3::new(r * a.cos(), r * a.sin(), 0.0));
    }
    let faces = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
    build(verts, faces)
}

/// Subdivided icosahedron projected to a sphere of radius `r`.
pub fn icosphere(r: f64, subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    build(verts.into_iter().map(|p| p * r).collect(), faces)
}

/// Icosphere with seeded radial jitter of relative amplitude `amp`.
pub fn jittered_sphere(r: f64, subdivisions: usize, amp: f64, seed: u64) -> TriMesh {
    let base = icosphere(r, subdivisions);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verts = base.vertices().iter().map(|p| p * (1.0 + amp * rng.gen_range(-1.0..1.0))).collect();
    build(verts, base.faces().to_vec())
}

/// Surface of the unit cube `[0,1]³`, each side split into an `n × n` grid.
pub fn cube(n: usize) -> TriMesh {
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    let mut vid = |p: [usize; 3], verts: &mut Vec<Vec3>| {
        *index.entry(p).or_insert_with(|| {
            verts.push(Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) / n as f64);
            verts.len() - 1
        })
    };
    // (normal axis, side, u axis, v axis) with u × v pointing outward
    let sides = [(0, n, 1, 2), (0, 0, 2, 1), (1, n, 2, 0), (1, 0, 0, 2), (2, n, 0, 1), (2, 0, 1, 0)];
    for &(axis, level, ua, va) in &sides {
        for j in 0..n {
            for i in 0..n {
                let at = |di: usize, dj: usize| {
                    let mut p = [0usize; 3];
                    p[axis] = level;
                    p[ua] = i + di;
                    p[va] = j + dj;
                    p
                };
                let a = vid(at(0, 0), &mut verts);
                let b = vid(at(1, 0), &mut verts);
                let c = vid(at(1, 1), &mut verts);
                let d = vid(at(0, 1), &mut verts);
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
    }
    build(verts, faces)
}

/// Torus with major radius `big_r`, tube radius `small_r`.
pub fn torus(big_r: f64, small_r: f64, nu: usize, nv: usize) -> TriMesh {
    let mut verts = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * PI * j as f64 / nv as f64;
            let rr = big_r + small_r * v.cos();
            verts.push(Vec3::new(rr * u.cos(), rr * u.sin(), small_r * v.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    build(verts, faces)
}

/// Revolves a profile `(radius, z)` around the z axis. Profile points with
/// zero radius become single pole vertices; other end rings stay open.
pub fn revolve(profile: &[(f64, f64)], n_around: usize) -> TriMesh {
    let mut verts = Vec::new();
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for &(r, z) in profile {
        if r == 0.0 {
            verts.push(Vec3::new(0.0, 0.0, z));
            rings.push(vec![verts.len() - 1]);
        } else {
            let ring = (0..n_around)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / n_around as f64;
                    verts.push(Vec3::new(r * a.cos(), r * a.sin(), z));
                    verts.len() - 1
                })
                .collect();
            rings.push(ring);
        }
    }
    let mut faces = Vec::new();
    for w in rings.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        match (lo.len(), hi.len()) {
            (1, 1) => {}
            (1, _) => {
                for k in 0..n_around {
                    faces.push([lo[0], hi[(k + 1) % n_around], hi[k]]);
                }
            }
            (_, 1) => {
                for k in 0..n_around {
                    faces.push([lo[k], lo[(k + 1) % n_around], hi[0]]);
                }
            }
            _ => {
                for k in 0..n_around {
                    let k1 = (k + 1) % n_around;
                    faces.push([lo[k], lo[k1], hi[k1]]);
                    faces.push([lo[k], hi[k1], hi[k]]);
                }
            }
        }
    }
    build(verts, faces)
}

/// Open cylinder of the given radius along z in `[0, height]`.
pub fn cylinder(radius: f64, height: f64, n_around: usize, n_rings: usize) -> TriMesh {
    let profile: Vec<(f64, f64)> =
        (0..=n_rings).map(|i| (radius, height * i as f64 / n_rings as f64)).collect();
    revolve(&profile, n_around)
}

/// Closed capsule: cylinder of half-length `half` with hemispherical caps.
pub fn capsule(radius: f64, half: f64, n_around: usize, cap_rings: usize, body_rings: usize) -> TriMesh {
    let mut profile = vec![(0.0, -half - radius)];
    for i in 1..=cap_rings {
        let a = -PI / 2.0 + (PI / 2.0) * i as f64 / cap_rings as f64;
        profile.push((radius * a.cos(), -half + radius * a.sin()));
    }
    for i in 1..body_rings {
        profile.push((radius, -half + 2.0 * half * i as f64 / body_rings as f64));
    }
    for i in 0..cap_rings {
        let a = (PI / 2.0) * i as f64 / cap_rings as f64;
        profile.push((radius * a.cos(), half + radius * a.sin()));
    }
    profile.push((0.0, half + radius));
    revolve(&profile, n_around)
}

/// Flat strip `[0, length] × [0, width]` and the same strip rolled isometrically
/// onto a cylinder of radius `bend_radius` (arc length preserved).
pub fn strip_pair(length: f64, width: f64, nx: usize, ny: usize, bend_radius: f64) -> (TriMesh, TriMesh) {
    let flat = grid(nx, ny, 1.0).map_vertices(|p| {
        Vec3::new(p.x * length / nx as f64, p.y * width / ny as f64, 0.0)
    });
    let flat = flat.expect("strip");
    let bent = flat
        .map_vertices(|p| {
            let a = p.x / bend_radius;
            Vec3::new(bend_radius * a.sin(), p.y, bend_radius * (1.0 - a.cos()))
        })
        .expect("bent strip");
    (flat, bent)
}

/// Random rigid motion (rotation + translation) seeded by `seed`.
pub fn random_rigid_motion(seed: u64) -> impl Fn(&Vec3) -> Vec3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let angle = rng.gen_range(0.0..2.0 * PI);
    let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
    let shift = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
    move |p: &Vec3| rot * p + shift
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_are_closed_where_expected() {
        assert_eq!(cube(2).euler_characteristic(), 2);
        assert_eq!(cube(2).vertex_count(), 26);
        assert_eq!(torus(2.0, 0.5, 12, 8).euler_characteristic(), 0);
        let cap = capsule(0.5, 1.0, 12, 4, 6);
        assert_eq!(cap.euler_characteristic(), 2);
        assert!(cap.boundary_loops().unwrap().is_empty());
        let cyl = cylinder(1.0, 2.0, 16, 8);
        assert_eq!(cyl.boundary_loops().unwrap().len(), 2);
        assert_eq!(hexagon(1.0).euler_characteristic(), 1);
    }

    #[test]
    fn outward_orientation() {
        for m in [icosphere(1.0, 1), cube(2), capsule(0.5, 1.0, 12, 4, 6)] {
            let c: Vec3 = m.vertices().iter().sum::<Vec3>() / m.vertex_count() as f64;
            for f in 0..m.face_count() {
                let [a, _, _] = m.face(f);
                assert!(m.face_normal(f).dot(&(m.vertex(a) - c)) > 0.0);
            }
        }
    }
}
