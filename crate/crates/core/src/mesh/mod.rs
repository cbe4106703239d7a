//! Indexed triangle meshes with the adjacency every other stage leans on.
//!
//! A [`TriMesh`] is validated once at construction and is immutable
//! afterwards. Faces are stored counter-clockwise; each vertex carries its
//! one-ring in counter-clockwise order together with the fan of faces between
//! consecutive ring neighbors.

mod io;

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

pub use io::{load_labels, load_mesh, save_labels, save_mesh, save_ply_colored, MeshFormat};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

/// Number of semantic part labels.
pub const LABEL_COUNT: usize = 8;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported mesh format: {0}")]
    Format(String),
    #[error("non-triangle face at index {0}")]
    NonTriangle(usize),
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("face {0} repeats a vertex")]
    RepeatedVertex(usize),
    #[error("degenerate face {face} (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("non-manifold edge ({0}, {1}): more than two incident faces or inconsistent orientation")]
    NonManifoldEdge(usize, usize),
    #[error("non-manifold vertex {0}: incident faces do not form a single fan")]
    NonManifoldVertex(usize),
    #[error("label error: {0}")]
    Label(String),
    #[error("empty mesh")]
    Empty,
}

/// Indexed triangle mesh.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    face_areas: Vec<f64>,
    /// Counter-clockwise neighbor ring per vertex.
    one_rings: Vec<Vec<usize>>,
    /// `vertex_fans[v][k]` is the face spanned by `v`, `one_rings[v][k]` and the
    /// next ring neighbor.
    vertex_fans: Vec<Vec<usize>>,
    boundary_vertex: Vec<bool>,
    /// Directed half-edge (a, b) -> face that owns it.
    half_edges: HashMap<(usize, usize), usize>,
    labels: Option<Vec<u8>>,
}

impl TriMesh {
    /// Builds and validates a mesh. Degenerate faces, out-of-range indices,
    /// and non-manifold configurations are rejected.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(MeshError::Empty);
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= n {
                    return Err(MeshError::IndexOutOfRange { face: fi, index: i, count: n });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::RepeatedVertex(fi));
            }
        }

        let diag2 = bbox_diagonal_sq(&vertices);
        let min_area = 1e-12 * diag2;
        let face_areas: Vec<f64> = faces.iter().map(|f| tri_area(&vertices, f)).collect();
        for (fi, &a) in face_areas.iter().enumerate() {
            if !(a > min_area) {
                return Err(MeshError::DegenerateFace { face: fi, area: a });
            }
        }

        let mut half_edges = HashMap::with_capacity(faces.len() * 3);
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if half_edges.insert((a, b), fi).is_some() {
                    return Err(MeshError::NonManifoldEdge(a.min(b), a.max(b)));
                }
            }
        }

        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                incident[v].push(fi);
            }
        }

        let mut one_rings = Vec::with_capacity(n);
        let mut vertex_fans = Vec::with_capacity(n);
        let mut boundary_vertex = vec![false; n];
        for v in 0..n {
            let (ring, fan, on_boundary) = build_fan(v, &faces, &incident[v], &half_edges)?;
            one_rings.push(ring);
            vertex_fans.push(fan);
            boundary_vertex[v] = on_boundary;
        }

        Ok(Self {
            vertices,
            faces,
            face_areas,
            one_rings,
            vertex_fans,
            boundary_vertex,
            half_edges,
            labels: None,
        })
    }

    /// Attaches per-vertex labels, each in `[0, LABEL_COUNT)`.
    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self, MeshError> {
        if labels.len() != self.vertices.len() {
            return Err(MeshError::Label(format!(
                "{} labels for {} vertices",
                labels.len(),
                self.vertices.len()
            )));
        }
        if let Some((v, l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= LABEL_COUNT) {
            return Err(MeshError::Label(format!("vertex {v} has label {l} outside 0..{LABEL_COUNT}")));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Vec3 {
        self.vertices[v]
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> [usize; 3] {
        self.faces[f]
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn one_ring(&self, v: usize) -> &[usize] {
        &self.one_rings[v]
    }

    pub fn vertex_fan(&self, v: usize) -> &[usize] {
        &self.vertex_fans[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// Face owning the directed half-edge `a -> b`.
    pub fn half_edge_face(&self, a: usize, b: usize) -> Option<usize> {
        self.half_edges.get(&(a, b)).copied()
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas.iter().sum()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal_sq(&self.vertices).sqrt()
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        (self.vertices[a] - self.vertices[b]).norm()
    }

    /// Unit normal of face `f`.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f];
        let p = &self.vertices;
        (p[b] - p[a]).cross(&(p[c] - p[a])).normalize()
    }

    /// Area-weighted vertex normal.
    pub fn vertex_normal(&self, v: usize) -> Vec3 {
        let mut n = Vec3::zeros();
        for &f in &self.vertex_fans[v] {
            let [a, b, c] = self.faces[f];
            let p = &self.vertices;
            n += (p[b] - p[a]).cross(&(p[c] - p[a]));
        }
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            n
        }
    }

    /// Interior angle of face `f` at its corner `v`.
    pub fn corner_angle(&self, f: usize, v: usize) -> f64 {
        let face = self.faces[f];
        let k = face.iter().position(|&x| x == v).expect("vertex not in face");
        let p = &self.vertices;
        let a = p[face[(k + 1) % 3]] - p[v];
        let b = p[face[(k + 2) % 3]] - p[v];
        angle_between(&a, &b)
    }

    /// Sum of incident corner angles at `v`.
    pub fn angle_sum(&self, v: usize) -> f64 {
        self.vertex_fans[v].iter().map(|&f| self.corner_angle(f, v)).sum()
    }

    /// Angle deficit at `v`: `2π − Σθ` for interior vertices, `π − Σθ` on the boundary.
    pub fn angle_deficit(&self, v: usize) -> f64 {
        let full = if self.boundary_vertex[v] { PI } else { 2.0 * PI };
        full - self.angle_sum(v)
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.half_edges
            .keys()
            .filter(|&&(a, b)| a < b || !self.half_edges.contains_key(&(b, a)))
            .count()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edge_count() as i64 + self.face_count() as i64
    }

    /// Ordered boundary loops of the whole mesh; see [`boundary_loops_of`].
    pub fn boundary_loops(&self) -> Result<Vec<Vec<usize>>, MeshError> {
        boundary_loops_of(&self.faces)
    }

    /// Connected components as sorted vertex lists, ordered by smallest vertex.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.vertex_count();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut i = 0;
            while i < members.len() {
                let v = members[i];
                i += 1;
                for &w in &self.one_rings[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = id;
                        members.push(w);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Copy with every vertex mapped through `f`; topology and labels are kept.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Self, MeshError> {
        let verts = self.vertices.iter().map(f).collect();
        let mut m = TriMesh::new(verts, self.faces.clone())?;
        m.labels = self.labels.clone();
        Ok(m)
    }
}

/// Triangle area from three positions.
pub fn tri_area(verts: &[Vec3], f: &[usize; 3]) -> f64 {
    let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
    0.5 * (b - a).cross(&(c - a)).norm()
}

pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

fn bbox_diagonal_sq(verts: &[Vec3]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in verts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm_squared()
}

/// Walks the faces around `v` counter-clockwise. Returns the ring, the fan,
/// and whether `v` lies on the boundary.
fn build_fan(
    v: usize,
    faces: &[[usize; 3]],
    incident: &[usize],
    half_edges: &HashMap<(usize, usize), usize>,
) -> Result<(Vec<usize>, Vec<usize>, bool), MeshError> {
    if incident.is_empty() {
        return Ok((Vec::new(), Vec::new(), false));
    }
    // In face (v, next, prev) the sweep from `next` to `prev` is counter-clockwise.
    let corners = |f: usize| {
        let face = faces[f];
        let k = face.iter().position(|&x| x == v).unwrap();
        (face[(k + 1) % 3], face[(k + 2) % 3])
    };
    // Boundary fan starts at the face whose (v, next) edge has no twin.
    let start = incident
        .iter()
        .copied()
        .filter(|&f| {
            let (next, _) = corners(f);
            !half_edges.contains_key(&(next, v))
        })
        .min();
    let on_boundary = start.is_some();
    let start = match start {
        Some(f) => f,
        None => {
            // interior: begin at the face whose `next` is the lowest neighbor
            *incident.iter().min_by_key(|&&f| corners(f).0).unwrap()
        }
    };

    let mut ring = Vec::with_capacity(incident.len() + 1);
    let mut fan = Vec::with_capacity(incident.len());
    let mut f = start;
    loop {
        let (next, prev) = corners(f);
        if fan.is_empty() {
            ring.push(next);
        }
        fan.push(f);
        ring.push(prev);
        // Twin of (prev -> v) belongs to (v -> prev), which is the next face around v.
        match half_edges.get(&(v, prev)) {
            Some(&g) if g == start => {
                ring.pop();
                break;
            }
            Some(&g) => {
                if fan.len() > incident.len() {
                    return Err(MeshError::NonManifoldVertex(v));
                }
                f = g;
            }
            None => break,
        }
    }
    if fan.len() != incident.len() {
        return Err(MeshError::NonManifoldVertex(v));
    }
    Ok((ring, fan, on_boundary))
}

/// Closed boundary loops of a face set, ordered clockwise with respect to the
/// face normals (the reverse of the counter-clockwise face winding). Each
/// loop starts at its smallest vertex id; loops are sorted by that id.
///
/// Edges with more than two incident faces (or two faces with the same
/// winding) are reported as [`MeshError::NonManifoldEdge`].
pub fn boundary_loops_of(faces: &[[usize; 3]]) -> Result<Vec<Vec<usize>>, MeshError> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let c = directed.entry((a, b)).or_insert(0);
            *c += 1;
            if *c > 1 {
                return Err(MeshError::NonManifoldEdge(a.min(b), a.max(b)));
            }
        }
    }
    // clockwise: traverse boundary half-edges backwards (b -> a)
    let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(a, b) in directed.keys() {
        if !directed.contains_key(&(b, a)) {
            outgoing.entry(b).or_default().push(a);
        }
    }
    for targets in outgoing.values_mut() {
        targets.sort_unstable();
    }
    let mut loops = Vec::new();
    let mut starts: Vec<usize> = outgoing.keys().copied().collect();
    starts.sort_unstable();
    for s in starts {
        while outgoing.get(&s).is_some_and(|t| !t.is_empty()) {
            let mut lp = vec![s];
            let mut cur = s;
            loop {
                let targets = outgoing.get_mut(&cur).expect("boundary edge chain broken");
                let next = targets.remove(0);
                if next == s {
                    break;
                }
                lp.push(next);
                cur = next;
            }
            loops.push(lp);
        }
    }
    loops.sort_by_key(|l| l[0]);
    Ok(loops)
}

/// A subset of a parent mesh's faces with local reindexing.
#[derive(Debug, Clone)]
pub struct SubMesh<'a> {
    parent: &'a TriMesh,
    vertex_ids: Vec<usize>,
    face_ids: Vec<usize>,
    local: HashMap<usize, usize>,
}

impl<'a> SubMesh<'a> {
    /// Sub-mesh spanned by `face_ids`; its vertices are exactly the face corners.
    pub fn from_faces(parent: &'a TriMesh, mut face_ids: Vec<usize>) -> Self {
        face_ids.sort_unstable();
        face_ids.dedup();
        let mut vertex_ids: Vec<usize> = face_ids.iter().flat_map(|&f| parent.faces[f]).collect();
        vertex_ids.sort_unstable();
        vertex_ids.dedup();
        let local = vertex_ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        Self { parent, vertex_ids, face_ids, local }
    }

    pub fn parent(&self) -> &'a TriMesh {
        self.parent
    }

    pub fn vertex_ids(&self) -> &[usize] {
        &self.vertex_ids
    }

    pub fn face_ids(&self) -> &[usize] {
        &self.face_ids
    }

    pub fn local_index(&self, v: usize) -> Option<usize> {
        self.local.get(&v).copied()
    }

    pub fn contains_vertex(&self, v: usize) -> bool {
        self.local.contains_key(&v)
    }

    /// Faces in parent vertex ids.
    pub fn global_faces(&self) -> Vec<[usize; 3]> {
        self.face_ids.iter().map(|&f| self.parent.faces[f]).collect()
    }

    /// Faces in local vertex indices.
    pub fn local_faces(&self) -> Vec<[usize; 3]> {
        self.face_ids
            .iter()
            .map(|&f| self.parent.faces[f].map(|v| self.local[&v]))
            .collect()
    }

    pub fn euler_characteristic(&self) -> i64 {
        let mut edges: Vec<(usize, usize)> = self
            .face_ids
            .iter()
            .flat_map(|&f| {
                let t = self.parent.faces[f];
                [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
            })
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        self.vertex_ids.len() as i64 - edges.len() as i64 + self.face_ids.len() as i64
    }

    /// Boundary loops in parent vertex ids.
    pub fn boundary_loops(&self) -> Result<Vec<Vec<usize>>, MeshError> {
        boundary_loops_of(&self.global_faces())
    }

    /// True when every face around `v` in the parent is part of this sub-mesh
    /// and `v` is not on the parent's boundary.
    pub fn is_interior_vertex(&self, v: usize) -> bool {
        if self.parent.is_boundary_vertex(v) || !self.contains_vertex(v) {
            return false;
        }
        self.parent.vertex_fans[v].iter().all(|f| self.face_ids.binary_search(f).is_ok())
    }

    /// Single simple boundary loop and χ = 1.
    pub fn is_topological_disk(&self) -> bool {
        if self.euler_characteristic() != 1 {
            return false;
        }
        match self.boundary_loops() {
            Ok(loops) if loops.len() == 1 => {
                let mut seen = loops[0].clone();
                seen.sort_unstable();
                seen.windows(2).all(|w| w[0] != w[1])
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn single_triangle_area() {
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(m.face_areas()[0], 3.0);
        assert_eq!(m.total_area(), 3.0);
        assert_eq!(m.euler_characteristic(), 1);
        assert_eq!(m.boundary_loops().unwrap(), vec![vec![0, 2, 1]]);
    }

    #[test]
    fn unit_square_area_and_scaling() {
        let m = synthetic::grid(1, 1, 1.0);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        let s = 3.0;
        let scaled = m.map_vertices(|p| p * s).unwrap();
        assert!((scaled.total_area() - s * s).abs() < 1e-12);
    }

    #[test]
    fn tetrahedron_area_and_topology() {
        let m = synthetic::regular_tetrahedron(1.0);
        assert!((m.total_area() - 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.boundary_loops().unwrap().is_empty());
        for v in 0..4 {
            assert_eq!(m.one_ring(v).len(), 3);
            assert!(!m.is_boundary_vertex(v));
        }
    }

    #[test]
    fn icosphere_area_close_to_sphere() {
        let m = synthetic::icosphere(1.0, 3);
        let rel = (m.total_area() - 4.0 * PI).abs() / (4.0 * PI);
        assert!(rel < 0.01, "rel {rel}");
        assert!(m.boundary_loops().unwrap().is_empty());
    }

    #[test]
    fn gauss_bonnet_on_closed_meshes() {
        for m in [synthetic::icosphere(1.0, 2), synthetic::torus(2.0, 0.7, 24, 12), synthetic::cube(3)] {
            let total: f64 = (0..m.vertex_count()).map(|v| m.angle_deficit(v)).sum();
            let expect = 2.0 * PI * m.euler_characteristic() as f64;
            let scale = expect.abs().max(1.0);
            assert!((total - expect).abs() < 1e-6 * scale, "{total} vs {expect}");
        }
    }

    #[test]
    fn grid_boundary_single_clockwise_loop() {
        let m = synthetic::grid(4, 3, 1.0);
        let loops = m.boundary_loops().unwrap();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].len(), 2 * (4 + 3));
        // clockwise when seen from +z (the face normal side)
        let pts: Vec<Vec3> = loops[0].iter().map(|&v| m.vertex(v)).collect();
        let mut signed = 0.0;
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            signed += a.x * b.y - b.x * a.y;
        }
        assert!(signed < 0.0);
    }

    #[test]
    fn annulus_has_two_loops_and_zero_euler() {
        let m = synthetic::grid(4, 4, 1.0);
        // drop the four faces around the center vertex (2,2)
        let center = 2 * 5 + 2;
        let keep: Vec<usize> =
            (0..m.face_count()).filter(|&f| !m.face(f).contains(&center)).collect();
        let sub = SubMesh::from_faces(&m, keep);
        assert_eq!(sub.boundary_loops().unwrap().len(), 2);
        assert_eq!(sub.euler_characteristic(), 0);
        assert!(!sub.is_topological_disk());
    }

    #[test]
    fn disk_classification() {
        let m = synthetic::grid(4, 4, 1.0);
        let all = SubMesh::from_faces(&m, (0..m.face_count()).collect());
        assert!(all.is_topological_disk());
        let sphere = synthetic::icosphere(1.0, 1);
        let whole = SubMesh::from_faces(&sphere, (0..sphere.face_count()).collect());
        assert_eq!(whole.euler_characteristic(), 2);
        assert!(!whole.is_topological_disk());
    }

    #[test]
    fn pinched_faces_are_not_a_disk() {
        let verts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
        ];
        let m = TriMesh::new(verts, vec![[0, 1, 2], [0, 3, 4]]);
        // a bowtie is non-manifold at the shared vertex
        assert!(matches!(m, Err(MeshError::NonManifoldVertex(0))));
    }

    #[test]
    fn rejects_bad_faces() {
        let v = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert!(matches!(
            TriMesh::new(v.clone(), vec![[0, 1, 2]]),
            Err(MeshError::DegenerateFace { face: 0, .. })
        ));
        assert!(matches!(
            TriMesh::new(v.clone(), vec![[0, 1, 3]]),
            Err(MeshError::IndexOutOfRange { face: 0, index: 3, .. })
        ));
        assert!(matches!(TriMesh::new(v, vec![[0, 1, 1]]), Err(MeshError::RepeatedVertex(0))));
    }

    #[test]
    fn rejects_non_manifold_edge() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let r = TriMesh::new(v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]);
        assert!(matches!(r, Err(MeshError::NonManifoldEdge(0, 1))));
    }

    #[test]
    fn one_ring_is_counter_clockwise() {
        let m = synthetic::grid(2, 2, 1.0);
        let c = 4; // center of a 3x3 vertex grid
        let ring = m.one_ring(c);
        assert_eq!(ring.len(), m.vertex_fan(c).len());
        let p0 = m.vertex(c);
        let mut prev = f64::NEG_INFINITY;
        let base = {
            let d = m.vertex(ring[0]) - p0;
            d.y.atan2(d.x)
        };
        for &w in ring {
            let d = m.vertex(w) - p0;
            let a = (d.y.atan2(d.x) - base).rem_euclid(2.0 * PI);
            assert!(a >= prev);
            prev = a;
        }
        assert_eq!(ring[0], *ring.iter().min().unwrap());
    }

    #[test]
    fn labels_validated() {
        let m = synthetic::regular_tetrahedron(1.0);
        assert!(m.clone().with_labels(vec![0, 1, 2, 7]).is_ok());
        assert!(m.clone().with_labels(vec![0, 1, 2]).is_err());
        assert!(m.with_labels(vec![0, 1, 2, 9]).is_err());
    }
}
