//! Local patch extraction and unit-disk parameterization.
//!
//! A patch is the set of faces inside a geodesic ball. Disk-topology patches
//! are mapped harmonically (cotangent Laplace equation with the boundary
//! fixed to the unit circle by arc length); other patches, and harmonic maps
//! that fold over, use geodesic polar coordinates instead. Charts are then
//! rotated so a global harmonic flow field points along the chart's x-axis.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::io::Write;

use thiserror::Error;

use crate::geodesics::{GeodesicBall, GeodesicError};
use crate::linalg::{CsrMatrix, LinalgError, SolverKind, SpdSolver};
use crate::mesh::{MeshError, SubMesh, TriMesh, Vec2, Vec3};

/// Chart coordinates are snapped to multiples of this step after alignment,
/// which makes aligned charts independent of the input's in-plane rotation
/// to the last bit (rotations only perturb coordinates at the 1e-16 level).
pub const ALIGN_LATTICE: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("degenerate patch at vertex {center}: {reason}")]
    DegeneratePatch { center: usize, reason: String },
    #[error("patch at vertex {0} is not a topological disk")]
    NotDisk(usize),
    #[error("flow sources and sinks must be nonempty")]
    EmptyConstraints,
    #[error("vertex {0} is both a flow source and a sink")]
    OverlappingConstraints(usize),
    #[error("vertex {0} is out of range")]
    VertexOutOfRange(usize),
    #[error("connected component containing vertex {0} has no flow source or sink")]
    Unconstrained(usize),
    #[error(transparent)]
    Solver(#[from] LinalgError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
}

/// The faces of a mesh inside one geodesic ball.
#[derive(Debug, Clone)]
pub struct Patch<'b, 'm> {
    pub center: usize,
    pub sub: SubMesh<'m>,
    pub ball: &'b GeodesicBall<'m>,
    pub is_disk: bool,
}

impl<'b, 'm> Patch<'b, 'm> {
    pub fn mesh(&self) -> &'m TriMesh {
        self.sub.parent()
    }
}

/// Faces whose three corners were all reached by the ball.
pub fn extract_patch<'b, 'm>(ball: &'b GeodesicBall<'m>) -> Result<Patch<'b, 'm>, ParamError> {
    let mesh = ball.mesh();
    let center = ball.center();
    let reached: HashSet<usize> = ball.distances().iter().map(|&(v, _)| v).collect();
    let mut faces = Vec::new();
    for &(v, _) in ball.distances() {
        for &f in mesh.vertex_fan(v) {
            if mesh.face(f).iter().all(|u| reached.contains(u)) {
                faces.push(f);
            }
        }
    }
    if faces.is_empty() {
        return Err(ParamError::DegeneratePatch { center, reason: "no face lies inside the ball".into() });
    }
    let sub = SubMesh::from_faces(mesh, faces);
    if !sub.is_interior_vertex(center) {
        return Err(ParamError::DegeneratePatch { center, reason: "center one-ring is not inside the patch".into() });
    }
    let is_disk = sub.is_topological_disk();
    Ok(Patch { center, sub, ball, is_disk })
}

/// Which map produced a chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartMethod {
    Harmonic,
    Polar,
}

impl ChartMethod {
    pub fn tag(self) -> u8 {
        match self {
            ChartMethod::Harmonic => 0,
            ChartMethod::Polar => 1,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(ChartMethod::Harmonic),
            1 => Some(ChartMethod::Polar),
            _ => None,
        }
    }
}

/// Unit-disk coordinates of a patch's vertices, indexed like `sub.vertex_ids()`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskParam {
    pub coords: Vec<Vec2>,
    /// False for vertices dropped from the chart (path tracing failed).
    pub valid: Vec<bool>,
    pub method: ChartMethod,
    /// Rotation applied by [`align`], in radians.
    pub calibration_angle: f64,
    pub aligned: bool,
    /// Some parameterized face has non-positive signed area.
    pub folded: bool,
}

impl DiskParam {
    /// Signed area of a local face in the chart.
    pub fn signed_area(&self, f: [usize; 3]) -> f64 {
        let (a, b, c) = (self.coords[f[0]], self.coords[f[1]], self.coords[f[2]]);
        0.5 * ((b - a).perp(&(c - a)))
    }

    /// Writes one `vertex_id x y` line per charted vertex.
    pub fn write_debug<W: Write>(&self, sub: &SubMesh, mut out: W) -> std::io::Result<()> {
        for (i, &v) in sub.vertex_ids().iter().enumerate() {
            if self.valid[i] {
                writeln!(out, "{v} {} {}", self.coords[i].x, self.coords[i].y)?;
            }
        }
        Ok(())
    }
}

fn cot_at(pk: Vec3, pi: Vec3, pj: Vec3) -> f64 {
    let (a, b) = (pi - pk, pj - pk);
    a.dot(&b) / a.cross(&b).norm()
}

/// `½(cot β_k + cot β_l)` for edge `(i, j)`; single-sided on boundary edges.
pub fn cotangent_weight(mesh: &TriMesh, i: usize, j: usize) -> f64 {
    let (pi, pj) = (mesh.vertex(i), mesh.vertex(j));
    let mut w = 0.0;
    for f in [mesh.half_edge_face(i, j), mesh.half_edge_face(j, i)].into_iter().flatten() {
        let k = mesh.face(f).into_iter().find(|&v| v != i && v != j).unwrap();
        w += 0.5 * cot_at(mesh.vertex(k), pi, pj);
    }
    w
}

/// Boundary angles proportional to cumulative arc length along the loop,
/// scaled so the loop closes at exactly 2π on its first vertex.
pub fn boundary_angles(points: &[Vec3]) -> Vec<f64> {
    let m = points.len();
    let seg: Vec<f64> = (1..=m).map(|k| (points[k % m] - points[k - 1]).norm()).collect();
    let total: f64 = seg.iter().sum();
    let mut theta = vec![0.0; m];
    let mut acc = 0.0;
    for k in 1..=m {
        acc += seg[k - 1];
        theta[k % m] = if k == m { 2.0 * PI } else { 2.0 * PI * acc / total };
    }
    theta
}

/// Harmonic map of a disk patch onto the unit disk.
pub fn harmonic_map(patch: &Patch, solver: SolverKind) -> Result<DiskParam, ParamError> {
    if !patch.is_disk {
        return Err(ParamError::NotDisk(patch.center));
    }
    let mesh = patch.mesh();
    let sub = &patch.sub;
    let n = sub.vertex_ids().len();
    let loops = sub.boundary_loops()?;
    let cw = &loops[0];
    // boundary loops are clockwise; walk counter-clockwise so the map keeps orientation
    let m = cw.len();
    let ccw: Vec<usize> = (0..m).map(|k| cw[(m - k) % m]).collect();
    let theta = boundary_angles(&ccw.iter().map(|&v| mesh.vertex(v)).collect::<Vec<_>>());

    let mut coords = vec![Vec2::zeros(); n];
    let mut is_boundary = vec![false; n];
    for (k, &v) in ccw.iter().enumerate() {
        let li = sub.local_index(v).unwrap();
        coords[li] = Vec2::new(theta[k].cos(), theta[k].sin());
        is_boundary[li] = true;
    }
    let interior: Vec<usize> = (0..n).filter(|&i| !is_boundary[i]).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in interior.iter().enumerate() {
        slot[i] = k;
    }
    let mut triplets = Vec::new();
    let mut rhs_x = vec![0.0; interior.len()];
    let mut rhs_y = vec![0.0; interior.len()];
    for (row, &i) in interior.iter().enumerate() {
        let vi = sub.vertex_ids()[i];
        let mut diag = 0.0;
        for &vj in mesh.one_ring(vi) {
            let w = cotangent_weight(mesh, vi, vj);
            diag += w;
            let j = sub.local_index(vj).expect("interior vertex neighbor outside patch");
            if is_boundary[j] {
                rhs_x[row] += w * coords[j].x;
                rhs_y[row] += w * coords[j].y;
            } else {
                triplets.push((row, slot[j], -w));
            }
        }
        triplets.push((row, row, diag));
    }
    if !interior.is_empty() {
        let a = CsrMatrix::from_triplets(interior.len(), &triplets);
        let solver = SpdSolver::new(a, solver)?;
        let x = solver.solve(&rhs_x)?;
        let y = solver.solve(&rhs_y)?;
        for (k, &i) in interior.iter().enumerate() {
            coords[i] = Vec2::new(x[k], y[k]);
        }
    }
    let mut param = DiskParam {
        coords,
        valid: vec![true; n],
        method: ChartMethod::Harmonic,
        calibration_angle: 0.0,
        aligned: false,
        folded: false,
    };
    param.folded = sub.local_faces().into_iter().any(|f| param.signed_area(f) <= 0.0);
    Ok(param)
}

/// Max over interior vertices of `|Σ c_ij (μ_j − μ_i)|`, evaluated directly
/// from the mesh (independently of any solver).
pub fn harmonic_residual(patch: &Patch, param: &DiskParam) -> f64 {
    let mesh = patch.mesh();
    let sub = &patch.sub;
    let boundary: HashSet<usize> = sub.boundary_loops().unwrap_or_default().into_iter().flatten().collect();
    let mut worst: f64 = 0.0;
    for (i, &vi) in sub.vertex_ids().iter().enumerate() {
        if boundary.contains(&vi) {
            continue;
        }
        let mut r = Vec2::zeros();
        for &vj in mesh.one_ring(vi) {
            let j = sub.local_index(vj).unwrap();
            r += cotangent_weight(mesh, vi, vj) * (param.coords[j] - param.coords[i]);
        }
        worst = worst.max(r.norm());
    }
    worst
}

/// Geodesic polar map: `(dist / r) · (cos a, sin a)` with `a` the geodesic's
/// departure angle at the center.
pub fn geodesic_polar_map(patch: &Patch) -> DiskParam {
    let ball = patch.ball;
    let r = ball.radius();
    let ids = patch.sub.vertex_ids();
    let mut coords = vec![Vec2::zeros(); ids.len()];
    let mut valid = vec![true; ids.len()];
    for (i, &v) in ids.iter().enumerate() {
        match (ball.distance(v), ball.trace_path(v)) {
            (Some(d), Ok(path)) => {
                let rho = d / r;
                coords[i] = Vec2::new(rho * path.angle.cos(), rho * path.angle.sin());
            }
            _ => {
                log::warn!("polar map: dropping vertex {v} from the chart of vertex {}", patch.center);
                valid[i] = false;
            }
        }
    }
    let mut param =
        DiskParam { coords, valid, method: ChartMethod::Polar, calibration_angle: 0.0, aligned: false, folded: false };
    param.folded = patch
        .sub
        .local_faces()
        .into_iter()
        .any(|f| f.iter().all(|&i| param.valid[i]) && param.signed_area(f) <= 0.0);
    param
}

/// Harmonic scalar potential between sources (`u = 0`) and sinks (`u = 1`).
#[derive(Debug, Clone)]
pub struct FlowField {
    pub u: Vec<f64>,
    /// Per-face gradient of the piecewise-linear potential.
    pub grad: Vec<Vec3>,
    pub sources: Vec<usize>,
    pub sinks: Vec<usize>,
}

impl FlowField {
    /// Area-weighted mean of the face gradients around `v`.
    pub fn vertex_flow(&self, mesh: &TriMesh, v: usize) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut area = 0.0;
        for &f in mesh.vertex_fan(v) {
            let a = mesh.face_areas()[f];
            acc += self.grad[f] * a;
            area += a;
        }
        acc / area
    }
}

/// Gradient of the linear interpolant of `u` over face `f`.
pub fn face_gradient(mesh: &TriMesh, f: usize, u: &[f64]) -> Vec3 {
    let [a, b, c] = mesh.face(f);
    let (pa, pb, pc) = (mesh.vertex(a), mesh.vertex(b), mesh.vertex(c));
    let n = (pb - pa).cross(&(pc - pa));
    let area2 = n.norm();
    let nn = n / area2;
    (nn.cross(&(pc - pb)) * u[a] + nn.cross(&(pa - pc)) * u[b] + nn.cross(&(pb - pa)) * u[c]) / area2
}

/// Solves the clamped-cotangent Laplace equation with `u = 0` on `sources`
/// and `u = 1` on `sinks`.
pub fn solve_flow_field(
    mesh: &TriMesh,
    sources: &[usize],
    sinks: &[usize],
    solver: SolverKind,
) -> Result<FlowField, ParamError> {
    if sources.is_empty() || sinks.is_empty() {
        return Err(ParamError::EmptyConstraints);
    }
    let n = mesh.vertex_count();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &s in sources {
        if s >= n {
            return Err(ParamError::VertexOutOfRange(s));
        }
        fixed[s] = Some(0.0);
    }
    for &t in sinks {
        if t >= n {
            return Err(ParamError::VertexOutOfRange(t));
        }
        if fixed[t] == Some(0.0) {
            return Err(ParamError::OverlappingConstraints(t));
        }
        fixed[t] = Some(1.0);
    }
    for comp in mesh.connected_components() {
        if comp.iter().all(|&v| fixed[v].is_none()) {
            return Err(ParamError::Unconstrained(comp[0]));
        }
    }
    let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &v) in free.iter().enumerate() {
        slot[v] = k;
    }
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; free.len()];
    for (row, &v) in free.iter().enumerate() {
        let mut diag = 0.0;
        for &w in mesh.one_ring(v) {
            let c = cotangent_weight(mesh, v, w).max(0.0);
            diag += c;
            match fixed[w] {
                Some(val) => rhs[row] += c * val,
                None => triplets.push((row, slot[w], -c)),
            }
        }
        triplets.push((row, row, diag));
    }
    let mut u: Vec<f64> = fixed.iter().map(|x| x.unwrap_or(0.0)).collect();
    if !free.is_empty() {
        let a = CsrMatrix::from_triplets(free.len(), &triplets);
        let x = SpdSolver::new(a, solver)?.solve(&rhs)?;
        for (k, &v) in free.iter().enumerate() {
            u[v] = x[k];
        }
    }
    let grad = (0..mesh.face_count()).map(|f| face_gradient(mesh, f, &u)).collect();
    Ok(FlowField { u, grad, sources: sources.to_vec(), sinks: sinks.to_vec() })
}

/// Terms of the calibration formula `θ_v = AxisToV − AxisToBase − BaseToRef`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// Lowest-index one-ring neighbor of the center.
    pub base_neighbor: usize,
    /// Face used to project the flow vector.
    pub projection_face: usize,
    pub axis_to_base: f64,
    pub base_to_ref: f64,
}

/// Surface angle from the base edge to the projected flow at the patch
/// center, or `None` when the projected flow vanishes.
pub fn base_to_ref(mesh: &TriMesh, center: usize, flow: &FlowField) -> Option<(usize, usize, f64)> {
    let nb = *mesh.one_ring(center).iter().min()?;
    let face = [mesh.half_edge_face(center, nb), mesh.half_edge_face(nb, center)].into_iter().flatten().min()?;
    let n = mesh.face_normal(face);
    let phi = flow.vertex_flow(mesh, center);
    let phi_p = phi - n * phi.dot(&n);
    let e = mesh.vertex(nb) - mesh.vertex(center);
    if !(phi_p.norm() > 1e-12 * phi.norm()) {
        return None;
    }
    Some((nb, face, e.cross(&phi_p).dot(&n).atan2(e.dot(&phi_p))))
}

/// Rotates a chart so the flow direction at the center lies along +x.
///
/// Every vertex angle becomes `AxisToV − AxisToBase − BaseToRef`; radii are
/// unchanged. When the projected flow vanishes the chart is returned
/// unrotated with `aligned = false`.
pub fn align(param: &DiskParam, patch: &Patch, flow: &FlowField) -> DiskParam {
    let mesh = patch.mesh();
    let mut out = param.clone();
    let Some((nb, _, b2r)) = base_to_ref(mesh, patch.center, flow) else {
        out.aligned = false;
        return out;
    };
    let (ic, ib) = (patch.sub.local_index(patch.center).unwrap(), patch.sub.local_index(nb).unwrap());
    let e = param.coords[ib] - param.coords[ic];
    let axis_to_base = e.y.atan2(e.x);
    let psi = -(axis_to_base + b2r);
    let (s, c) = psi.sin_cos();
    for p in out.coords.iter_mut() {
        let r = Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y);
        *p = r.map(|x| (x / ALIGN_LATTICE).round() * ALIGN_LATTICE);
    }
    out.calibration_angle = psi.rem_euclid(2.0 * PI);
    out.aligned = true;
    out
}

/// Returns the calibration terms used by [`align`] for inspection.
pub fn calibration(param: &DiskParam, patch: &Patch, flow: &FlowField) -> Option<Calibration> {
    let mesh = patch.mesh();
    let (nb, face, b2r) = base_to_ref(mesh, patch.center, flow)?;
    let (ic, ib) = (patch.sub.local_index(patch.center)?, patch.sub.local_index(nb)?);
    let e = param.coords[ib] - param.coords[ic];
    Some(Calibration { base_neighbor: nb, projection_face: face, axis_to_base: e.y.atan2(e.x), base_to_ref: b2r })
}
