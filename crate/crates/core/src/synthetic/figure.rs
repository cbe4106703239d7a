//! Articulated capsule figures with eight part labels.
//!
//! A figure is the smooth union of capsules (torso, head, two arms, two
//! legs), polygonized with marching tetrahedra on a Freudenthal grid and then
//! relaxed tangentially while staying on the implicit surface.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::path::Path;

use crate::mesh::{save_labels, save_mesh, MeshError, MeshFormat, TriMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PartLabel {
    Head = 0,
    Torso = 1,
    UpperArm = 2,
    Forearm = 3,
    Hand = 4,
    Thigh = 5,
    Shin = 6,
    Foot = 7,
}

#[derive(Debug, Clone, Copy)]
struct Capsule {
    a: Vec3,
    b: Vec3,
    r: f64,
    part: PartLabel,
}

impl Capsule {
    fn new(a: Vec3, b: Vec3, r: f64, part: PartLabel) -> Self {
        Self { a, b, r, part }
    }

    fn distance(&self, p: &Vec3) -> f64 {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        let t = if len2 > 0.0 { ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (p - (self.a + ab * t)).norm() - self.r
    }
}

#[derive(Debug, Clone)]
pub struct FigureParams {
    /// Grid spacing of the polygonizer; smaller means more vertices.
    pub spacing: f64,
    /// Tangential relaxation sweeps after polygonization.
    pub relax_iterations: usize,
    /// Blend radius of the smooth union.
    pub blend: f64,
}

impl Default for FigureParams {
    fn default() -> Self {
        Self { spacing: 0.03, relax_iterations: 12, blend: 0.03 }
    }
}

/// A generated figure with per-vertex part labels and flow landmarks
/// (source at the top of the head, sinks at the two toe tips).
#[derive(Debug, Clone)]
pub struct LabeledFigure {
    pub name: String,
    pub mesh: TriMesh,
    pub sources: Vec<usize>,
    pub sinks: Vec<usize>,
}

struct Skeleton {
    capsules: Vec<Capsule>,
    head_top: Vec3,
    toes: [Vec3; 2],
}

fn rotate_toward(d: Vec3, toward: Vec3, angle: f64) -> Vec3 {
    let perp = (toward - d * d.dot(&toward)).normalize();
    (d * angle.cos() + perp * angle.sin()).normalize()
}

fn pose(rng: &mut ChaCha8Rng) -> Skeleton {
    use PartLabel::*;
    let deg = PI / 180.0;
    let mut s = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    let forward = Vec3::new(0.0, 1.0, 0.0);
    // per-figure build: torso length and girth, limb girth, and independent
    // segment proportions, so no two figures share the same geometry
    let torso_len = s(0.9, 1.1);
    let torso_girth = s(0.9, 1.15);
    let limb_girth = s(0.88, 1.18);
    let neck = 0.45 * torso_len;
    let mut caps = vec![
        Capsule::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, neck + 0.01), 0.15 * torso_girth, Torso),
        Capsule::new(Vec3::new(-0.12, 0.0, 0.0), Vec3::new(0.12, 0.0, 0.0), 0.13 * torso_girth, Torso),
        Capsule::new(Vec3::new(-0.17, 0.0, neck), Vec3::new(0.17, 0.0, neck), 0.09 * torso_girth, Torso),
        Capsule::new(Vec3::new(0.0, 0.0, neck + 0.11), Vec3::new(0.0, 0.0, neck + 0.21), 0.06, Head),
        Capsule::new(Vec3::new(0.0, 0.01, neck + 0.29), Vec3::new(0.0, 0.0, neck + 0.35), 0.105, Head),
    ];
    let head_top = Vec3::new(0.0, 0.0, neck + 0.35 + 0.105);
    let mut toes = [Vec3::zeros(); 2];
    for (k, side) in [-1.0f64, 1.0].into_iter().enumerate() {
        let limb = s(0.93, 1.07);
        let mut seg = || limb * s(0.92, 1.08);
        let (upper_len, fore_len, thigh_len, shin_len) = (0.27 * seg(), 0.24 * seg(), 0.42 * seg(), 0.40 * seg());
        // arm
        let shoulder = Vec3::new(side * (0.15 + 0.09 * torso_girth), 0.0, neck);
        let abduct = s(25.0, 75.0) * deg;
        let swing = s(-25.0, 25.0) * deg;
        let up = Vec3::new(side * abduct.sin(), 0.0, -abduct.cos());
        let upper_dir = rotate_toward(up, forward, swing);
        let elbow = shoulder + upper_dir * upper_len;
        let fore_dir = rotate_toward(upper_dir, forward, s(0.0, 55.0) * deg);
        let wrist = elbow + fore_dir * fore_len;
        caps.push(Capsule::new(shoulder, elbow, 0.06 * limb_girth, UpperArm));
        caps.push(Capsule::new(elbow, wrist, 0.052 * limb_girth, Forearm));
        caps.push(Capsule::new(wrist + fore_dir * 0.03, wrist + fore_dir * 0.10, 0.05, Hand));
        // leg
        let hip = Vec3::new(side * 0.12, 0.0, -0.04);
        let spread = s(3.0, 14.0) * deg;
        let stride = s(-18.0, 18.0) * deg;
        let down = Vec3::new(side * spread.sin(), 0.0, -spread.cos());
        let thigh_dir = rotate_toward(down, forward, stride);
        let knee = hip + thigh_dir * thigh_len;
        let shin_dir = rotate_toward(thigh_dir, -forward, s(0.0, 28.0) * deg);
        let ankle = knee + shin_dir * shin_len;
        let foot_dir = (forward - Vec3::new(0.0, 0.0, 0.25)).normalize();
        caps.push(Capsule::new(hip, knee, 0.08 * limb_girth, Thigh));
        caps.push(Capsule::new(knee, ankle, 0.06 * limb_girth, Shin));
        let toe = ankle + foot_dir * 0.15;
        caps.push(Capsule::new(ankle + foot_dir * 0.02, toe, 0.05, Foot));
        toes[k] = toe + foot_dir * 0.05;
    }
    Skeleton { capsules: caps, head_top, toes }
}

fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

impl Skeleton {
    fn sdf(&self, p: &Vec3, blend: f64) -> f64 {
        self.capsules.iter().map(|c| c.distance(p)).fold(f64::INFINITY, |acc, d| smooth_min(acc, d, blend))
    }

    fn label(&self, p: &Vec3) -> PartLabel {
        self.capsules
            .iter()
            .min_by(|a, b| a.distance(p).total_cmp(&b.distance(p)))
            .map(|c| c.part)
            .unwrap()
    }

    fn gradient(&self, p: &Vec3, blend: f64) -> Vec3 {
        let e = 1e-5;
        let mut g = Vec3::zeros();
        for i in 0..3 {
            let mut d = Vec3::zeros();
            d[i] = e;
            g[i] = (self.sdf(&(p + d), blend) - self.sdf(&(p - d), blend)) / (2.0 * e);
        }
        g
    }

    fn project(&self, p: Vec3, blend: f64) -> Vec3 {
        let mut q = p;
        for _ in 0..4 {
            let f = self.sdf(&q, blend);
            let g = self.gradient(&q, blend);
            let g2 = g.norm_squared();
            if g2 < 1e-12 {
                break;
            }
            q -= g * (f / g2);
        }
        q
    }
}

/// Marching tetrahedra over the Freudenthal subdivision of a regular grid.
fn polygonize(field: impl Fn(&Vec3) -> f64, lo: Vec3, hi: Vec3, h: f64) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let dims = ((hi - lo) / h).map(|x| x.ceil() as usize + 1);
    let (nx, ny, nz) = (dims.x, dims.y, dims.z);
    let node = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;
    let pos = |i: usize, j: usize, k: usize| lo + Vec3::new(i as f64, j as f64, k as f64) * h;
    let nudge = 0.02 * h;
    let mut values = vec![0.0; nx * ny * nz];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let mut f = field(&pos(i, j, k));
                // keep crossings away from grid nodes so no sliver collapses
                if f.abs() < nudge {
                    f = if f < 0.0 { -nudge } else { nudge };
                }
                values[node(i, j, k)] = f;
            }
        }
    }

    let mut verts: Vec<Vec3> = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();
    let mut faces = Vec::new();
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                for perm in &perms {
                    let mut c = [i, j, k];
                    let mut tet = [(0usize, Vec3::zeros()); 4];
                    tet[0] = (node(c[0], c[1], c[2]), pos(c[0], c[1], c[2]));
                    for (step, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        tet[step + 1] = (node(c[0], c[1], c[2]), pos(c[0], c[1], c[2]));
                    }
                    let inside: Vec<usize> = (0..4).filter(|&t| values[tet[t].0] < 0.0).collect();
                    if inside.is_empty() || inside.len() == 4 {
                        continue;
                    }
                    let outside: Vec<usize> = (0..4).filter(|&t| values[tet[t].0] >= 0.0).collect();
                    let mut cut = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
                        let (na, pa) = tet[a];
                        let (nb, pb) = tet[b];
                        let key = (na.min(nb), na.max(nb));
                        *edge_vertex.entry(key).or_insert_with(|| {
                            let (fa, fb) = (values[na], values[nb]);
                            let t = fa / (fa - fb);
                            verts.push(pa + (pb - pa) * t);
                            verts.len() - 1
                        })
                    };
                    let mut tris: Vec<[usize; 3]> = Vec::new();
                    match inside.len() {
                        1 => {
                            let p = inside[0];
                            tris.push([
                                cut(p, outside[0], &mut verts),
                                cut(p, outside[1], &mut verts),
                                cut(p, outside[2], &mut verts),
                            ]);
                        }
                        3 => {
                            let q = outside[0];
                            tris.push([
                                cut(inside[0], q, &mut verts),
                                cut(inside[1], q, &mut verts),
                                cut(inside[2], q, &mut verts),
                            ]);
                        }
                        _ => {
                            let (p, q) = (inside[0], inside[1]);
                            let (r, s) = (outside[0], outside[1]);
                            let pr = cut(p, r, &mut verts);
                            let ps = cut(p, s, &mut verts);
                            let qs = cut(q, s, &mut verts);
                            let qr = cut(q, r, &mut verts);
                            tris.push([pr, ps, qs]);
                            tris.push([pr, qs, qr]);
                        }
                    }
                    let in_c: Vec3 = inside.iter().map(|&t| tet[t].1).sum::<Vec3>() / inside.len() as f64;
                    let out_c: Vec3 = outside.iter().map(|&t| tet[t].1).sum::<Vec3>() / outside.len() as f64;
                    let outward = out_c - in_c;
                    for mut t in tris {
                        let n = (verts[t[1]] - verts[t[0]]).cross(&(verts[t[2]] - verts[t[0]]));
                        if n.dot(&outward) < 0.0 {
                            t.swap(1, 2);
                        }
                        faces.push(t);
                    }
                }
            }
        }
    }
    (verts, faces)
}

/// Keeps the largest face-connected component and compacts vertex indices.
fn largest_component(verts: Vec<Vec3>, faces: Vec<[usize; 3]>) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let n = verts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for f in &faces {
        for k in 1..3 {
            let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[k]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut count: HashMap<usize, usize> = HashMap::new();
    for f in &faces {
        *count.entry(find(&mut parent, f[0])).or_default() += 1;
    }
    let best = count.iter().max_by_key(|(r, c)| (**c, std::cmp::Reverse(**r))).map(|(r, _)| *r).unwrap();
    let mut remap = vec![usize::MAX; n];
    let mut out_v = Vec::new();
    let mut out_f = Vec::new();
    for f in &faces {
        if find(&mut parent, f[0]) != best {
            continue;
        }
        out_f.push(f.map(|v| {
            if remap[v] == usize::MAX {
                remap[v] = out_v.len();
                out_v.push(verts[v]);
            }
            remap[v]
        }));
    }
    (out_v, out_f)
}

fn relax(skel: &Skeleton, verts: &mut [Vec3], faces: &[[usize; 3]], iterations: usize, blend: f64) {
    let n = verts.len();
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
    }
    for l in &mut nbrs {
        l.sort_unstable();
        l.dedup();
    }
    for _ in 0..iterations {
        let next: Vec<Vec3> = (0..n)
            .map(|v| {
                let c: Vec3 = nbrs[v].iter().map(|&w| verts[w]).sum::<Vec3>() / nbrs[v].len() as f64;
                let g = skel.gradient(&verts[v], blend);
                let normal = if g.norm() > 0.0 { g.normalize() } else { g };
                let d = c - verts[v];
                let tangential = d - normal * normal.dot(&d);
                skel.project(verts[v] + tangential * 0.5, blend)
            })
            .collect();
        verts.copy_from_slice(&next);
    }
}

fn nearest_vertex(verts: &[Vec3], target: &Vec3) -> usize {
    (0..verts.len())
        .min_by(|&a, &b| (verts[a] - target).norm().total_cmp(&(verts[b] - target).norm()))
        .unwrap()
}

impl LabeledFigure {
    /// Generates one figure; the pose is drawn from `seed`.
    pub fn generate(name: &str, seed: u64, params: &FigureParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skel = pose(&mut rng);
        let pad = 0.1;
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for c in &skel.capsules {
            for p in [c.a, c.b] {
                lo = lo.inf(&(p - Vec3::repeat(c.r + pad)));
                hi = hi.sup(&(p + Vec3::repeat(c.r + pad)));
            }
        }
        // offset the lattice so the surface never sits on a symmetry plane of the grid
        lo -= Vec3::new(0.37, 0.21, 0.13) * params.spacing;
        let blend = params.blend;
        let (verts, faces) = polygonize(|p| skel.sdf(p, blend), lo, hi, params.spacing);
        let (mut verts, faces) = largest_component(verts, faces);
        relax(&skel, &mut verts, &faces, params.relax_iterations, blend);
        let labels: Vec<u8> = verts.iter().map(|p| skel.label(p) as u8).collect();
        let sources = vec![nearest_vertex(&verts, &skel.head_top)];
        let mut sinks: Vec<usize> = skel.toes.iter().map(|t| nearest_vertex(&verts, t)).collect();
        sinks.sort_unstable();
        sinks.dedup();
        let mesh = TriMesh::new(verts, faces)
            .and_then(|m| m.with_labels(labels))
            .expect("figure polygonization produced an invalid mesh");
        Self { name: name.to_string(), mesh, sources, sinks }
    }

    /// Writes `<name>.off` and `<name>.labels` into `mesh_dir` and
    /// `<name>.landmarks` (`sources …` / `sinks …`) into `landmark_dir`.
    pub fn save(&self, mesh_dir: &Path, landmark_dir: &Path) -> Result<(), MeshError> {
        save_mesh(&self.mesh, &mesh_dir.join(format!("{}.off", self.name)), MeshFormat::Off)?;
        save_labels(self.mesh.labels().unwrap(), &mesh_dir.join(format!("{}.labels", self.name)))?;
        let ids = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let text = format!("sources {}\nsinks {}\n", ids(&self.sources), ids(&self.sinks));
        let path = landmark_dir.join(format!("{}.landmarks", self.name));
        std::fs::write(&path, text).map_err(|e| MeshError::Io { path: path.display().to_string(), source: e })
    }
}

/// `count` figures named `figure_000`, `figure_001`, ... with seeds derived from `seed`.
pub fn figure_corpus(count: usize, seed: u64, params: &FigureParams) -> Vec<LabeledFigure> {
    (0..count)
        .map(|i| LabeledFigure::generate(&format!("figure_{i:03}"), seed.wrapping_mul(1000).wrapping_add(i as u64), params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_is_closed_connected_and_fully_labeled() {
        let fig = LabeledFigure::generate("f", 3, &FigureParams { spacing: 0.04, ..Default::default() });
        let m = &fig.mesh;
        assert!(m.boundary_loops().unwrap().is_empty());
        assert_eq!(m.connected_components().len(), 1);
        assert_eq!(m.euler_characteristic(), 2, "figure should be a sphere topologically");
        let labels = m.labels().unwrap();
        for part in 0..8u8 {
            assert!(labels.contains(&part), "part {part} missing");
        }
        assert_ne!(fig.sources[0], fig.sinks[0]);
    }
}
