//! Radius-bounded geodesic distance fields and geodesic path tracing.
//!
//! The default backend is an exact window-propagation method in the
//! Chen–Han family with the ICH vertex filter: intervals of an edge that
//! see the same (pseudo-)source through an unfolding are propagated face by
//! face in order of their minimum distance. Saddle and boundary vertices act
//! as new pseudo-sources. A Steiner-point Dijkstra backend is available as a
//! robust approximate fallback.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{TriMesh, Vec2, Vec3};

/// Absolute tolerance used by window dominance and visibility tests.
const TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesicError {
    #[error("vertex {0} is out of range")]
    VertexOutOfRange(usize),
    #[error("center vertex {0} has no incident faces")]
    IsolatedVertex(usize),
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("vertex {0} was not reached by the geodesic ball")]
    NotReached(usize),
    #[error("mesh is disconnected: {count} components, first vertices {representatives:?}, sizes {sizes:?}")]
    Disconnected { count: usize, representatives: Vec<usize>, sizes: Vec<usize> },
}

/// Which algorithm produced a distance field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeodesicBackend {
    /// Exact window propagation.
    Exact,
    /// Dijkstra on the edge graph refined by `points_per_edge` Steiner points
    /// per edge, fully connected within each face.
    Steiner { points_per_edge: usize },
}

impl Default for GeodesicBackend {
    fn default() -> Self {
        GeodesicBackend::Exact
    }
}

impl std::fmt::Display for GeodesicBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeodesicBackend::Exact => write!(f, "exact"),
            GeodesicBackend::Steiner { points_per_edge } => write!(f, "steiner:{points_per_edge}"),
        }
    }
}

impl std::str::FromStr for GeodesicBackend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "exact" {
            return Ok(GeodesicBackend::Exact);
        }
        if let Some(k) = s.strip_prefix("steiner") {
            let k = k.strip_prefix(':').unwrap_or("3");
            let points_per_edge = k.parse().map_err(|_| format!("bad steiner point count '{k}'"))?;
            return Ok(GeodesicBackend::Steiner { points_per_edge });
        }
        Err(format!("unknown geodesic backend '{s}' (expected 'exact' or 'steiner:K')"))
    }
}

/// `√(α / m)`: the patch radius for a mesh of total area `α`.
pub fn patch_radius(mesh: &TriMesh, m: usize) -> f64 {
    (mesh.total_area() / m as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// Child on edge `a → c` of the parent's face.
    Left,
    /// Child on edge `c → b` of the parent's face.
    Right,
}

/// An interval `[b0, b1]` of the directed half-edge `a → b`, lit by the
/// pseudo-source `s` (in the edge frame: `a` at the origin, `b` at `(len, 0)`,
/// the face being entered at `y > 0`).
#[derive(Debug, Clone)]
struct Window {
    a: usize,
    b: usize,
    face: usize,
    len: f64,
    b0: f64,
    b1: f64,
    s: Vec2,
    sigma: f64,
    pseudo: usize,
    parent: Option<usize>,
    side: Side,
    /// For windows created directly by a pseudo-source: the fan face of that
    /// source whose opposite edge the window lies on.
    spawn_face: usize,
    min_dist: f64,
}

impl Window {
    fn dist_at(&self, x: f64) -> f64 {
        self.sigma + (self.s - Vec2::new(x, 0.0)).norm()
    }
}

/// How a reached vertex obtained its distance.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Route {
    Source,
    /// Straight along an edge from pseudo-source `from`.
    Direct { from: usize },
    /// Third vertex of the face entered by a window.
    Opposite { window: usize },
    /// Endpoint of a window's edge interval, at edge coordinate `x`.
    Endpoint { window: usize, x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QueueItem {
    key: f64,
    seq: u64,
    kind: ItemKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ItemKind {
    Window(usize),
    Vertex(usize, f64),
}

impl Eq for QueueItem {}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (key, seq)
        other.key.total_cmp(&self.key).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A geodesic path from a vertex back to the ball center.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    /// Surface polyline starting at the queried vertex and ending at the center.
    pub points: Vec<Vec3>,
    /// Departure direction at the center, in `[0, 2π)` one-ring coordinates
    /// (angle 0 points at the first one-ring neighbor; the one-ring's total
    /// angle is rescaled to 2π).
    pub angle: f64,
}

impl GeodesicPath {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Steiner graph node: a mesh vertex or a point on an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Node {
    Vertex(usize),
    /// `(edge index, k)` with the edge stored as `(min, max)` vertex ids.
    Steiner(usize, usize),
}

#[derive(Debug, Clone)]
enum Routing {
    Exact { windows: Vec<Window>, routes: HashMap<usize, Route> },
    Steiner(SteinerRouting),
}

#[derive(Debug, Clone)]
struct SteinerRouting {
    k: usize,
    edges: Vec<(usize, usize)>,
    /// Predecessor node and the face the hop lies in.
    pred: HashMap<Node, (Node, usize)>,
}

impl SteinerRouting {
    fn position(&self, mesh: &TriMesh, n: Node) -> Vec3 {
        match n {
            Node::Vertex(v) => mesh.vertex(v),
            Node::Steiner(e, i) => {
                let (a, b) = self.edges[e];
                let t = (i + 1) as f64 / (self.k + 1) as f64;
                mesh.vertex(a) * (1.0 - t) + mesh.vertex(b) * t
            }
        }
    }
}

/// Radius-bounded geodesic distance field around a center vertex.
#[derive(Debug, Clone)]
pub struct GeodesicBall<'m> {
    mesh: &'m TriMesh,
    center: usize,
    radius: f64,
    backend: GeodesicBackend,
    dist: Vec<(usize, f64)>,
    routing: Routing,
    /// Prefix sums of corner angles around the center, one per fan face plus total.
    fan_angles: Vec<f64>,
}

impl<'m> GeodesicBall<'m> {
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn backend(&self) -> GeodesicBackend {
        self.backend
    }

    pub fn mesh(&self) -> &'m TriMesh {
        self.mesh
    }

    /// Reached vertices and their distances, sorted by vertex id.
    pub fn distances(&self) -> &[(usize, f64)] {
        &self.dist
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    pub fn distance(&self, v: usize) -> Option<f64> {
        self.dist.binary_search_by_key(&v, |&(u, _)| u).ok().map(|i| self.dist[i].1)
    }

    pub fn contains(&self, v: usize) -> bool {
        self.distance(v).is_some()
    }

    /// Writes one `id distance` line per reached vertex.
    pub fn write_debug<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for &(v, d) in &self.dist {
            writeln!(out, "{v} {d}")?;
        }
        Ok(())
    }

    /// Reconstructs the geodesic from `v` to the center.
    pub fn trace_path(&self, v: usize) -> Result<GeodesicPath, GeodesicError> {
        if !self.contains(v) {
            return Err(GeodesicError::NotReached(v));
        }
        match &self.routing {
            Routing::Exact { windows, routes } => self.trace_exact(v, windows, routes),
            Routing::Steiner(r) => self.trace_steiner(v, r),
        }
    }

    fn fan_index(&self, face: usize) -> usize {
        self.mesh.vertex_fan(self.center).iter().position(|&f| f == face).expect("face not in center fan")
    }

    /// Angle of direction `q - center` inside fan face `face`, normalized to one-ring coordinates.
    fn angle_in_fan(&self, face: usize, q: Vec3) -> f64 {
        let k = self.fan_index(face);
        let ring = self.mesh.one_ring(self.center);
        let c = self.mesh.vertex(self.center);
        let first = self.mesh.vertex(ring[k]) - c;
        let within = crate::mesh::angle_between(&first, &(q - c));
        self.normalize_angle(self.fan_angles[k] + within)
    }

    fn angle_of_neighbor(&self, v: usize) -> f64 {
        let ring = self.mesh.one_ring(self.center);
        let k = ring.iter().position(|&u| u == v).expect("vertex not in one-ring");
        self.normalize_angle(self.fan_angles[k])
    }

    fn normalize_angle(&self, a: f64) -> f64 {
        let total = *self.fan_angles.last().unwrap();
        let t = (a * 2.0 * PI / total).rem_euclid(2.0 * PI);
        if t >= 2.0 * PI {
            0.0
        } else {
            t
        }
    }

    fn trace_exact(
        &self,
        v: usize,
        windows: &[Window],
        routes: &HashMap<usize, Route>,
    ) -> Result<GeodesicPath, GeodesicError> {
        let mesh = self.mesh;
        let mut points = vec![mesh.vertex(v)];
        let mut angle = 0.0;
        let mut cur = v;
        let mut guard = 0usize;
        while cur != self.center {
            guard += 1;
            if guard > mesh.vertex_count() + 1 {
                return Err(GeodesicError::NotReached(v));
            }
            let route = *routes.get(&cur).ok_or(GeodesicError::NotReached(cur))?;
            let (mut w, mut x) = match route {
                Route::Source => return Err(GeodesicError::NotReached(cur)),
                Route::Direct { from } => {
                    points.push(mesh.vertex(from));
                    if from == self.center {
                        angle = self.angle_of_neighbor(cur);
                    }
                    cur = from;
                    continue;
                }
                Route::Opposite { window } => {
                    let win = &windows[window];
                    let c2 = third_vertex_2d(mesh, win);
                    (window, ray_x_crossing(win.s, c2).clamp(win.b0, win.b1))
                }
                Route::Endpoint { window, x } => (window, x),
            };
            loop {
                let win = &windows[w];
                let pa = mesh.vertex(win.a);
                let pb = mesh.vertex(win.b);
                let p = pa + (pb - pa) * (x / win.len);
                if (p - *points.last().unwrap()).norm() > 0.0 {
                    points.push(p);
                }
                match win.parent {
                    Some(pi) => {
                        let par = &windows[pi];
                        let c2 = third_vertex_2d(mesh, par);
                        let (p0, p1) = match win.side {
                            Side::Left => (Vec2::zeros(), c2),
                            Side::Right => (c2, Vec2::new(par.len, 0.0)),
                        };
                        let q = p0 + (p1 - p0) * (x / win.len);
                        x = ray_x_crossing(par.s, q).clamp(par.b0, par.b1);
                        w = pi;
                    }
                    None => {
                        let pv = win.pseudo;
                        points.push(mesh.vertex(pv));
                        if pv == self.center {
                            angle = self.angle_in_fan(win.spawn_face, p);
                        }
                        cur = pv;
                        break;
                    }
                }
            }
        }
        Ok(GeodesicPath { points, angle })
    }

    fn trace_steiner(&self, v: usize, r: &SteinerRouting) -> Result<GeodesicPath, GeodesicError> {
        let mut points = vec![self.mesh.vertex(v)];
        let mut node = Node::Vertex(v);
        let mut angle = 0.0;
        while node != Node::Vertex(self.center) {
            let &(prev, face) = r.pred.get(&node).ok_or(GeodesicError::NotReached(v))?;
            if prev == Node::Vertex(self.center) {
                angle = self.angle_in_fan(face, r.position(self.mesh, node));
            }
            points.push(r.position(self.mesh, prev));
            node = prev;
        }
        Ok(GeodesicPath { points, angle })
    }
}

/// Position of the propagation face's third vertex in a window's edge frame.
fn third_vertex_2d(mesh: &TriMesh, w: &Window) -> Vec2 {
    let c = opposite_vertex(mesh, w.face, w.a, w.b);
    place(w.len, mesh.edge_length(w.a, c), mesh.edge_length(w.b, c), 1.0)
}

fn opposite_vertex(mesh: &TriMesh, f: usize, a: usize, b: usize) -> usize {
    let face = mesh.face(f);
    face.into_iter().find(|&v| v != a && v != b).expect("face lacks a third vertex")
}

/// Point at distance `la` from the origin and `lb` from `(len, 0)`, on the
/// side of the x-axis given by the sign of `side`.
fn place(len: f64, la: f64, lb: f64, side: f64) -> Vec2 {
    let x = (la * la + len * len - lb * lb) / (2.0 * len);
    let y = (la * la - x * x).max(0.0).sqrt();
    Vec2::new(x, side * y)
}

/// x-coordinate where the line through `s` (below the axis) and `q` meets `y = 0`.
fn ray_x_crossing(s: Vec2, q: Vec2) -> f64 {
    let dy = q.y - s.y;
    if dy.abs() < 1e-300 {
        return q.x;
    }
    s.x + (q.x - s.x) * (-s.y / dy)
}

/// Parameter `u ∈ [0, 1]` where the ray from `s` through `(x, 0)` meets segment `p → q`.
fn hit_segment(s: Vec2, x: f64, p: Vec2, q: Vec2) -> f64 {
    let d = Vec2::new(x - s.x, -s.y);
    let e = q - p;
    let den = d.x * e.y - d.y * e.x;
    if den.abs() < 1e-300 {
        return 0.0;
    }
    let sp = s - p;
    ((d.x * sp.y - d.y * sp.x) / den).clamp(0.0, 1.0)
}

/// Coordinates of `pt` in the frame with origin `p0` and x-axis toward `p1`.
fn to_frame(pt: Vec2, p0: Vec2, p1: Vec2) -> Vec2 {
    let ex = (p1 - p0).normalize();
    let ey = Vec2::new(-ex.y, ex.x);
    let r = pt - p0;
    Vec2::new(r.dot(&ex), r.dot(&ey))
}

struct Propagator<'m> {
    mesh: &'m TriMesh,
    center: usize,
    radius: f64,
    dist: Vec<f64>,
    routes: HashMap<usize, Route>,
    windows: Vec<Window>,
    heap: BinaryHeap<QueueItem>,
    seq: u64,
    /// Distance at which each pseudo-source last spawned windows.
    spawned: Vec<f64>,
    pseudo_source: Vec<bool>,
}

impl<'m> Propagator<'m> {
    fn push(&mut self, key: f64, kind: ItemKind) {
        self.seq += 1;
        self.heap.push(QueueItem { key, seq: self.seq, kind });
    }

    fn relax(&mut self, v: usize, d: f64, route: Route) {
        if d < self.dist[v] {
            self.dist[v] = d;
            self.routes.insert(v, route);
            if self.pseudo_source[v] && v != self.center && d < self.radius && d < self.spawned[v] - 1e-12 * (1.0 + d) {
                self.push(d, ItemKind::Vertex(v, d));
            }
        }
    }

    fn dominated(&self, w: &Window) -> bool {
        let da = self.dist[w.a];
        let db = self.dist[w.b];
        da + w.b1 < w.dist_at(w.b1) - TOL || db + (w.len - w.b0) < w.dist_at(w.b0) - TOL
    }

    fn add_window(&mut self, mut w: Window) {
        if !(w.b1 - w.b0 > 1e-12 * w.len) {
            return;
        }
        w.min_dist = w.sigma
            + if w.s.x < w.b0 {
                (w.s - Vec2::new(w.b0, 0.0)).norm()
            } else if w.s.x > w.b1 {
                (w.s - Vec2::new(w.b1, 0.0)).norm()
            } else {
                w.s.y.abs()
            };
        if w.min_dist >= self.radius || self.dominated(&w) {
            return;
        }
        let idx = self.windows.len();
        let tol = 1e-10 * w.len;
        let (a, b, len) = (w.a, w.b, w.len);
        let (da, db) = (
            if w.b0 <= tol { Some(w.dist_at(0.0)) } else { None },
            if w.b1 >= len - tol { Some(w.dist_at(len)) } else { None },
        );
        let key = w.min_dist;
        self.windows.push(w);
        if let Some(d) = da {
            self.relax(a, d, Route::Endpoint { window: idx, x: 0.0 });
        }
        if let Some(d) = db {
            self.relax(b, d, Route::Endpoint { window: idx, x: len });
        }
        self.push(key, ItemKind::Window(idx));
    }

    fn spawn(&mut self, pv: usize) {
        let d0 = self.dist[pv];
        self.spawned[pv] = d0;
        let mesh = self.mesh;
        let ppv = mesh.vertex(pv);
        for &f in mesh.vertex_fan(pv) {
            let face = mesh.face(f);
            let k = face.iter().position(|&x| x == pv).unwrap();
            let (p, q) = (face[(k + 1) % 3], face[(k + 2) % 3]);
            let lp = (mesh.vertex(p) - ppv).norm();
            let lq = (mesh.vertex(q) - ppv).norm();
            self.relax(p, d0 + lp, Route::Direct { from: pv });
            self.relax(q, d0 + lq, Route::Direct { from: pv });
            if let Some(g) = mesh.half_edge_face(q, p) {
                let len = mesh.edge_length(p, q);
                let s = place(len, lq, lp, -1.0);
                self.add_window(Window {
                    a: q,
                    b: p,
                    face: g,
                    len,
                    b0: 0.0,
                    b1: len,
                    s,
                    sigma: d0,
                    pseudo: pv,
                    parent: None,
                    side: Side::Left,
                    spawn_face: f,
                    min_dist: 0.0,
                });
            }
        }
    }

    fn propagate(&mut self, wi: usize) {
        let mesh = self.mesh;
        let w = self.windows[wi].clone();
        let c = opposite_vertex(mesh, w.face, w.a, w.b);
        let lac = mesh.edge_length(w.a, c);
        let lbc = mesh.edge_length(w.b, c);
        let c2 = place(w.len, lac, lbc, 1.0);
        let xc = ray_x_crossing(w.s, c2);
        let tol = 1e-10 * w.len;
        if xc >= w.b0 - tol && xc <= w.b1 + tol {
            self.relax(c, w.sigma + (c2 - w.s).norm(), Route::Opposite { window: wi });
        }
        let child = |edge: (usize, usize), len: f64, t0: f64, t1: f64, p0: Vec2, p1: Vec2, side: Side| {
            mesh.half_edge_face(edge.0, edge.1).map(|face| Window {
                a: edge.0,
                b: edge.1,
                face,
                len,
                b0: t0,
                b1: t1,
                s: to_frame(w.s, p0, p1),
                sigma: w.sigma,
                pseudo: w.pseudo,
                parent: Some(wi),
                side,
                spawn_face: usize::MAX,
                min_dist: 0.0,
            })
        };
        let origin = Vec2::zeros();
        let bpos = Vec2::new(w.len, 0.0);
        let mut children = Vec::with_capacity(2);
        if w.b0 < xc {
            let t0 = hit_segment(w.s, w.b0, origin, c2) * lac;
            let t1 = if w.b1 >= xc { lac } else { hit_segment(w.s, w.b1, origin, c2) * lac };
            children.extend(child((w.a, c), lac, t0, t1, origin, c2, Side::Left));
        }
        if w.b1 > xc {
            let t0 = if w.b0 <= xc { 0.0 } else { hit_segment(w.s, w.b0, c2, bpos) * lbc };
            let t1 = hit_segment(w.s, w.b1, c2, bpos) * lbc;
            children.extend(child((c, w.b), lbc, t0, t1, c2, bpos, Side::Right));
        }
        for ch in children {
            self.add_window(ch);
        }
    }

    fn run(&mut self) {
        self.dist[self.center] = 0.0;
        self.routes.insert(self.center, Route::Source);
        self.spawn(self.center);
        while let Some(item) = self.heap.pop() {
            if item.key >= self.radius {
                break;
            }
            match item.kind {
                ItemKind::Vertex(v, d) => {
                    if d == self.dist[v] && d < self.spawned[v] {
                        self.spawn(v);
                    }
                }
                ItemKind::Window(wi) => {
                    if !self.dominated(&self.windows[wi]) {
                        self.propagate(wi);
                    }
                }
            }
        }
    }
}

fn fan_prefix_angles(mesh: &TriMesh, center: usize) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = vec![0.0];
    for &f in mesh.vertex_fan(center) {
        acc += mesh.corner_angle(f, center);
        out.push(acc);
    }
    out
}

/// Geodesic distances from `center` to every vertex closer than `radius`.
pub fn geodesic_ball(
    mesh: &TriMesh,
    center: usize,
    radius: f64,
    backend: GeodesicBackend,
) -> Result<GeodesicBall<'_>, GeodesicError> {
    if center >= mesh.vertex_count() {
        return Err(GeodesicError::VertexOutOfRange(center));
    }
    if mesh.vertex_fan(center).is_empty() {
        return Err(GeodesicError::IsolatedVertex(center));
    }
    if !(radius > 0.0) {
        return Err(GeodesicError::InvalidRadius(radius));
    }
    let n = mesh.vertex_count();
    let (dist, routing) = match backend {
        GeodesicBackend::Exact => {
            let pseudo_source = (0..n)
                .map(|v| mesh.is_boundary_vertex(v) || mesh.angle_sum(v) >= 2.0 * PI - 1e-6)
                .collect();
            let mut p = Propagator {
                mesh,
                center,
                radius,
                dist: vec![f64::INFINITY; n],
                routes: HashMap::new(),
                windows: Vec::new(),
                heap: BinaryHeap::new(),
                seq: 0,
                spawned: vec![f64::INFINITY; n],
                pseudo_source,
            };
            p.run();
            let dist = collect(&p.dist, radius);
            let routes = p.routes.into_iter().filter(|(v, _)| p.dist[*v] < radius).collect();
            (dist, Routing::Exact { windows: p.windows, routes })
        }
        GeodesicBackend::Steiner { points_per_edge } => {
            let (d, r) = steiner_dijkstra(mesh, center, radius, points_per_edge);
            (collect(&d, radius), Routing::Steiner(r))
        }
    };
    Ok(GeodesicBall { mesh, center, radius, backend, dist, routing, fan_angles: fan_prefix_angles(mesh, center) })
}

fn collect(dist: &[f64], radius: f64) -> Vec<(usize, f64)> {
    dist.iter().enumerate().filter(|(_, &d)| d < radius).map(|(v, &d)| (v, d)).collect()
}

fn steiner_dijkstra(mesh: &TriMesh, center: usize, radius: f64, k: usize) -> (Vec<f64>, SteinerRouting) {
    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    for f in mesh.faces() {
        for i in 0..3 {
            let (a, b) = (f[i].min(f[(i + 1) % 3]), f[i].max(f[(i + 1) % 3]));
            edge_index.entry((a, b)).or_insert_with(|| {
                edges.push((a, b));
                edges.len() - 1
            });
        }
    }
    let mut routing = SteinerRouting { k, edges, pred: HashMap::new() };
    let face_nodes = |f: usize| -> Vec<Node> {
        let face = mesh.face(f);
        let mut nodes: Vec<Node> = face.iter().map(|&v| Node::Vertex(v)).collect();
        for i in 0..3 {
            let (a, b) = (face[i].min(face[(i + 1) % 3]), face[i].max(face[(i + 1) % 3]));
            let e = edge_index[&(a, b)];
            nodes.extend((0..k).map(|j| Node::Steiner(e, j)));
        }
        nodes
    };
    let mut edge_faces: HashMap<usize, Vec<usize>> = HashMap::new();
    for (fi, f) in mesh.faces().iter().enumerate() {
        for i in 0..3 {
            let (a, b) = (f[i].min(f[(i + 1) % 3]), f[i].max(f[(i + 1) % 3]));
            edge_faces.entry(edge_index[&(a, b)]).or_default().push(fi);
        }
    }
    let mut best: HashMap<Node, f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    best.insert(Node::Vertex(center), 0.0);
    let mut nodes_of: Vec<Node> = Vec::new();
    let mut node_id: HashMap<Node, usize> = HashMap::new();
    let mut intern = |n: Node, nodes_of: &mut Vec<Node>| -> usize {
        *node_id.entry(n).or_insert_with(|| {
            nodes_of.push(n);
            nodes_of.len() - 1
        })
    };
    let cid = intern(Node::Vertex(center), &mut nodes_of);
    heap.push(QueueItem { key: 0.0, seq, kind: ItemKind::Vertex(cid, 0.0) });
    while let Some(item) = heap.pop() {
        let ItemKind::Vertex(id, d) = item.kind else { continue };
        if d >= radius {
            break;
        }
        let node = nodes_of[id];
        if best.get(&node).is_some_and(|&b| d > b) {
            continue;
        }
        let faces: Vec<usize> = match node {
            Node::Vertex(v) => mesh.vertex_fan(v).to_vec(),
            Node::Steiner(e, _) => edge_faces[&e].clone(),
        };
        let p = routing.position(mesh, node);
        for f in faces {
            for m in face_nodes(f) {
                if m == node {
                    continue;
                }
                let nd = d + (routing.position(mesh, m) - p).norm();
                if best.get(&m).map_or(true, |&b| nd < b) {
                    best.insert(m, nd);
                    routing.pred.insert(m, (node, f));
                    seq += 1;
                    let mid = intern(m, &mut nodes_of);
                    heap.push(QueueItem { key: nd, seq, kind: ItemKind::Vertex(mid, nd) });
                }
            }
        }
    }
    let mut dist = vec![f64::INFINITY; mesh.vertex_count()];
    for (n, d) in best {
        if let Node::Vertex(v) = n {
            dist[v] = d;
        }
    }
    (dist, routing)
}

/// Geodesic distances from `center` to every vertex of its component.
pub fn full_distance_field(mesh: &TriMesh, center: usize, backend: GeodesicBackend) -> Result<Vec<f64>, GeodesicError> {
    let ball = geodesic_ball(mesh, center, f64::INFINITY, backend)?;
    let mut out = vec![f64::INFINITY; mesh.vertex_count()];
    for &(v, d) in ball.distances() {
        out[v] = d;
    }
    Ok(out)
}

fn ensure_connected(mesh: &TriMesh) -> Result<(), GeodesicError> {
    let comps = mesh.connected_components();
    if comps.len() > 1 {
        return Err(GeodesicError::Disconnected {
            count: comps.len(),
            representatives: comps.iter().map(|c| c[0]).collect(),
            sizes: comps.iter().map(Vec::len).collect(),
        });
    }
    Ok(())
}

/// Mean geodesic distance from each vertex to a farthest-point sample of
/// `sample_count` sources (all vertices when `sample_count ≥ n`).
pub fn avg_geodesic_distance(
    mesh: &TriMesh,
    sample_count: usize,
    backend: GeodesicBackend,
) -> Result<Vec<f64>, GeodesicError> {
    ensure_connected(mesh)?;
    let n = mesh.vertex_count();
    let fields: Vec<Vec<f64>> = if sample_count >= n {
        (0..n).into_par_iter().map(|c| full_distance_field(mesh, c, backend)).collect::<Result<_, _>>()?
    } else {
        let mut fields = Vec::with_capacity(sample_count);
        let mut nearest = vec![f64::INFINITY; n];
        let mut next = 0usize;
        for _ in 0..sample_count.max(1) {
            let f = full_distance_field(mesh, next, backend)?;
            for (m, d) in nearest.iter_mut().zip(&f) {
                *m = m.min(*d);
            }
            fields.push(f);
            next = argmax(&nearest);
        }
        fields
    };
    let count = fields.len() as f64;
    Ok((0..n).map(|v| fields.iter().map(|f| f[v]).sum::<f64>() / count).collect())
}

/// Index of the largest value; ties go to the smallest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Endpoints of an approximate geodesic diameter by two farthest-point
/// sweeps, returned as `(smaller id, larger id)`.
pub fn diameter_endpoints(mesh: &TriMesh, backend: GeodesicBackend) -> Result<(usize, usize), GeodesicError> {
    ensure_connected(mesh)?;
    let a = argmax(&full_distance_field(mesh, 0, backend)?);
    let b = argmax(&full_distance_field(mesh, a, backend)?);
    Ok((a.min(b), a.max(b)))
}

/// Shortest-path distances along mesh edges (the classic upper bound on geodesics).
pub fn dijkstra_edge_distances(mesh: &TriMesh, center: usize) -> Vec<f64> {
    let n = mesh.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[center] = 0.0;
    heap.push(QueueItem { key: 0.0, seq: 0, kind: ItemKind::Vertex(center, 0.0) });
    while let Some(item) = heap.pop() {
        let ItemKind::Vertex(v, d) = item.kind else { continue };
        if d > dist[v] {
            continue;
        }
        for &u in mesh.one_ring(v) {
            let nd = d + mesh.edge_length(u, v);
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(QueueItem { key: nd, seq: 0, kind: ItemKind::Vertex(u, nd) });
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn patch_radius_formula() {
        let g = synthetic::grid(10, 10, 1.0);
        assert!((patch_radius(&g, 100) - 1.0).abs() < 1e-12);
        let s = g.map_vertices(|p| p * 3.0).unwrap();
        assert!((patch_radius(&s, 100) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn flat_grid_is_euclidean() {
        let g = synthetic::grid(12, 12, 0.1);
        let center = 6 * 13 + 6;
        let ball = geodesic_ball(&g, center, 0.45, GeodesicBackend::Exact).unwrap();
        assert!(ball.len() > 40);
        for &(v, d) in ball.distances() {
            let e = (g.vertex(v) - g.vertex(center)).norm();
            assert!((d - e).abs() < 1e-9, "v={v} d={d} e={e}");
            assert!(d < 0.45);
        }
    }

    #[test]
    fn flat_grid_paths_are_straight() {
        let g = synthetic::grid(10, 10, 0.1);
        let center = 5 * 11 + 5;
        let ball = geodesic_ball(&g, center, 0.6, GeodesicBackend::Exact).unwrap();
        for &(v, d) in ball.distances() {
            let path = ball.trace_path(v).unwrap();
            assert!((path.length() - d).abs() <= 1e-9 * d.max(1.0));
            if v != center {
                let dir = g.vertex(v) - g.vertex(center);
                let expect = dir.y.atan2(dir.x).rem_euclid(2.0 * PI);
                // angle 0 points at the first ring neighbor
                let r0 = g.vertex(g.one_ring(center)[0]) - g.vertex(center);
                let expect = (expect - r0.y.atan2(r0.x)).rem_euclid(2.0 * PI);
                let diff = (path.angle - expect).abs();
                assert!(diff < 1e-9 || (2.0 * PI - diff) < 1e-9, "v={v} {} {}", path.angle, expect);
            }
        }
        let p = ball.trace_path(center).unwrap();
        assert_eq!(p.points.len(), 1);
        assert_eq!(p.angle, 0.0);
    }

    #[test]
    fn sandwich_bounds_and_symmetry() {
        let mesh = synthetic::jittered_sphere(1.0, 2, 0.05, 7);
        let a = full_distance_field(&mesh, 3, GeodesicBackend::Exact).unwrap();
        let dj = dijkstra_edge_distances(&mesh, 3);
        for v in 0..mesh.vertex_count() {
            let e = (mesh.vertex(v) - mesh.vertex(3)).norm();
            assert!(a[v] + 1e-12 >= e);
            assert!(a[v] <= dj[v] * (1.0 + 1e-12) + 1e-12);
        }
        let b = full_distance_field(&mesh, 77, GeodesicBackend::Exact).unwrap();
        assert!((a[77] - b[3]).abs() < 1e-7 * a[77]);
    }

    #[test]
    fn radius_monotonicity() {
        let mesh = synthetic::jittered_sphere(1.0, 2, 0.05, 3);
        let small = geodesic_ball(&mesh, 10, 0.5, GeodesicBackend::Exact).unwrap();
        let large = geodesic_ball(&mesh, 10, 1.0, GeodesicBackend::Exact).unwrap();
        for &(v, d) in small.distances() {
            assert!((large.distance(v).unwrap() - d).abs() < 1e-12);
        }
    }

    #[test]
    fn steiner_backend_upper_bounds_exact() {
        let mesh = synthetic::jittered_sphere(1.0, 2, 0.05, 5);
        let exact = full_distance_field(&mesh, 0, GeodesicBackend::Exact).unwrap();
        let ball = geodesic_ball(&mesh, 0, 10.0, GeodesicBackend::Steiner { points_per_edge: 3 }).unwrap();
        assert_eq!(ball.backend(), GeodesicBackend::Steiner { points_per_edge: 3 });
        for &(v, d) in ball.distances() {
            assert!(d + 1e-12 >= exact[v]);
            assert!(d <= exact[v] * 1.05 + 1e-9);
            let p = ball.trace_path(v).unwrap();
            assert!((p.length() - d).abs() < 1e-9);
        }
    }

    #[test]
    fn tetrahedron_agd_symmetric() {
        let t = synthetic::regular_tetrahedron(1.0);
        let agd = avg_geodesic_distance(&t, 10, GeodesicBackend::Exact).unwrap();
        for v in &agd {
            assert!((v - agd[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn disconnected_mesh_rejected() {
        let a = synthetic::regular_tetrahedron(1.0);
        let mut verts = a.vertices().to_vec();
        let mut faces = a.faces().to_vec();
        verts.extend(a.vertices().iter().map(|p| p + Vec3::new(5.0, 0.0, 0.0)));
        faces.extend(a.faces().iter().map(|f| [f[0] + 4, f[1] + 4, f[2] + 4]));
        let m = TriMesh::new(verts, faces).unwrap();
        let err = avg_geodesic_distance(&m, 2, GeodesicBackend::Exact).unwrap_err();
        assert!(matches!(err, GeodesicError::Disconnected { count: 2, .. }));
    }

    #[test]
    fn backend_parses() {
        assert_eq!("exact".parse::<GeodesicBackend>().unwrap(), GeodesicBackend::Exact);
        assert_eq!("steiner:4".parse::<GeodesicBackend>().unwrap(), GeodesicBackend::Steiner { points_per_edge: 4 });
        assert!("heat".parse::<GeodesicBackend>().is_err());
    }

    #[test]
    fn debug_dump_lines() {
        let g = synthetic::grid(4, 4, 1.0);
        let ball = geodesic_ball(&g, 12, 1.5, GeodesicBackend::Exact).unwrap();
        let mut buf = Vec::new();
        ball.write_debug(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), ball.len());
        assert!(text.starts_with("6 "));
    }
}
