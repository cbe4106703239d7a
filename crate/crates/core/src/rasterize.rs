//! Regular grid embedded in the unit disk, with per-cell barycentric lookup.
//!
//! The grid is the square inscribed in the unit disk (side √2, centered at
//! the origin). Every cell center is located in a parameterized triangle,
//! and per-vertex features are sampled there by barycentric interpolation.

use thiserror::Error;

use crate::param::{DiskParam, Patch};
use crate::mesh::Vec2;

/// Barycentric coordinates down to this value still count as inside.
pub const INSIDE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("feature matrix has {found} values, expected {vertices} vertices × {width} channels")]
    WidthMismatch { vertices: usize, width: usize, found: usize },
    #[error("vertex {0} has no feature row")]
    MissingVertex(usize),
}

/// One grid cell: the containing face (global id), its corners (global
/// vertex ids) and the barycentric coordinates of the cell center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub face: Option<usize>,
    pub vertices: [usize; 3],
    pub bary: [f64; 3],
}

impl Cell {
    pub fn is_valid(&self) -> bool {
        self.face.is_some()
    }
}

/// Per-cell sampling data for one chart; cells are stored row by row
/// (`j * resolution + i`, `i` along the chart's x-axis).
#[derive(Debug, Clone, PartialEq)]
pub struct GridChart {
    pub resolution: usize,
    pub cells: Vec<Cell>,
}

impl GridChart {
    pub fn valid_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_valid()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.valid_count() == 0
    }
}

/// Center of cell `(i, j)` in disk coordinates.
pub fn cell_center(resolution: usize, i: usize, j: usize) -> Vec2 {
    let side = std::f64::consts::SQRT_2;
    let step = side / resolution as f64;
    Vec2::new(-side / 2.0 + (i as f64 + 0.5) * step, -side / 2.0 + (j as f64 + 0.5) * step)
}

/// Barycentric coordinates of `p` in triangle `(a, b, c)`.
pub fn barycentric(p: Vec2, a: Vec2, b: Vec2, c: Vec2) -> [f64; 3] {
    let area = (b - a).perp(&(c - a));
    let b1 = (p - a).perp(&(c - a)) / area;
    let b2 = (b - a).perp(&(p - a)) / area;
    [1.0 - b1 - b2, b1, b2]
}

/// Locates every cell center in the chart. Faces with non-positive signed
/// area in the chart are never sampled; when several faces contain a center
/// the one with the largest minimum barycentric coordinate wins, with ties
/// (within [`INSIDE_TOL`]) going to the lowest face id.
pub fn rasterize(param: &DiskParam, patch: &Patch, resolution: usize) -> GridChart {
    let empty = Cell { face: None, vertices: [0; 3], bary: [0.0; 3] };
    let mut cells = vec![empty; resolution * resolution];
    let mut best = vec![f64::NEG_INFINITY; resolution * resolution];
    let side = std::f64::consts::SQRT_2;
    let step = side / resolution as f64;
    let to_index = |x: f64| ((x + side / 2.0) / step - 0.5).floor();
    let ids = patch.sub.vertex_ids();
    for (local, &face) in patch.sub.local_faces().iter().zip(patch.sub.face_ids()) {
        if !local.iter().all(|&k| param.valid[k]) || param.signed_area(*local) <= 0.0 {
            continue;
        }
        let [a, b, c] = local.map(|k| param.coords[k]);
        let lo = a.inf(&b).inf(&c);
        let hi = a.sup(&b).sup(&c);
        let clamp = |v: f64| v.clamp(0.0, resolution as f64 - 1.0) as usize;
        let (i0, i1) = (to_index(lo.x), to_index(hi.x) + 1.0);
        let (j0, j1) = (to_index(lo.y), to_index(hi.y) + 1.0);
        if i1 < 0.0 || j1 < 0.0 || i0 > resolution as f64 - 1.0 || j0 > resolution as f64 - 1.0 {
            continue;
        }
        for j in clamp(j0)..=clamp(j1) {
            for i in clamp(i0)..=clamp(i1) {
                let bary = barycentric(cell_center(resolution, i, j), a, b, c);
                let min = bary[0].min(bary[1]).min(bary[2]);
                let k = j * resolution + i;
                if min >= -INSIDE_TOL && min > best[k] + INSIDE_TOL {
                    best[k] = min;
                    cells[k] = Cell { face: Some(face), vertices: local.map(|q| ids[q]), bary };
                }
            }
        }
    }
    GridChart { resolution, cells }
}

/// Features sampled on a chart: `channels` planes of `resolution²` values,
/// plane-major; the last plane is the 0/1 validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub resolution: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureGrid {
    pub fn at(&self, channel: usize, i: usize, j: usize) -> f64 {
        self.data[(channel * self.resolution + j) * self.resolution + i]
    }
}

/// Interpolates per-vertex features (`vertex_count × width`, row-major)
/// at every valid cell and appends the mask channel.
pub fn sample_features(chart: &GridChart, features: &[f64], width: usize, vertex_count: usize) -> Result<FeatureGrid, RasterError> {
    if features.len() != vertex_count * width {
        return Err(RasterError::WidthMismatch { vertices: vertex_count, width, found: features.len() });
    }
    let r2 = chart.resolution * chart.resolution;
    let mut data = vec![0.0; (width + 1) * r2];
    for (k, cell) in chart.cells.iter().enumerate() {
        if !cell.is_valid() {
            continue;
        }
        for &v in &cell.vertices {
            if v >= vertex_count {
                return Err(RasterError::MissingVertex(v));
            }
        }
        let [v0, v1, v2] = cell.vertices;
        let [b0, b1, b2] = cell.bary;
        for ch in 0..width {
            data[ch * r2 + k] = b0 * features[v0 * width + ch] + b1 * features[v1 * width + ch] + b2 * features[v2 * width + ch];
        }
        data[width * r2 + k] = 1.0;
    }
    Ok(FeatureGrid { resolution: chart.resolution, channels: width + 1, data })
}
