//! Vertex-to-face label transfer by voting, area-weighted accuracy,
//! text reports, colored-mesh export and a nearest-neighbor baseline.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{save_ply_colored, MeshError, TriMesh, LABEL_COUNT};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("vertex {vertex} has no valid label (found {label})")]
    Unlabeled { vertex: usize, label: u8 },
    #[error("{what}: expected {expected} entries, found {found}")]
    CountMismatch { what: String, expected: usize, found: usize },
    #[error("no meshes to evaluate")]
    Empty,
    #[error("mesh '{0}' has zero total area")]
    ZeroArea(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Fixed 8-color palette, one per part label.
pub const PALETTE: [[u8; 3]; LABEL_COUNT] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Counter-based 64-bit value for `(seed, mesh, face)`; independent of the
/// order in which faces are visited.
pub fn face_hash(seed: u64, mesh_id: u64, face: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ mesh_id) ^ face)
}

/// Voting rule for one face: the label held by at least two corners, or,
/// when all three differ, a uniform seeded choice among them.
pub fn vote(corners: [u8; 3], seed: u64, mesh_id: u64, face: u64) -> u8 {
    let [a, b, c] = corners;
    if a == b || a == c {
        a
    } else if b == c {
        b
    } else {
        let k = ((face_hash(seed, mesh_id, face) as u128 * 3) >> 64) as usize;
        corners[k]
    }
}

/// Per-face labels from per-vertex labels by [`vote`].
pub fn vertex_to_face_labels(mesh: &TriMesh, vertex_labels: &[u8], seed: u64, mesh_id: u64) -> Result<Vec<u8>, EvalError> {
    if vertex_labels.len() != mesh.vertex_count() {
        return Err(EvalError::CountMismatch {
            what: "vertex labels".into(),
            expected: mesh.vertex_count(),
            found: vertex_labels.len(),
        });
    }
    if let Some((v, &l)) = vertex_labels.iter().enumerate().find(|(_, &l)| l as usize >= LABEL_COUNT) {
        return Err(EvalError::Unlabeled { vertex: v, label: l });
    }
    Ok(mesh
        .faces()
        .iter()
        .enumerate()
        .map(|(f, &[a, b, c])| vote([vertex_labels[a], vertex_labels[b], vertex_labels[c]], seed, mesh_id, f as u64))
        .collect())
}

/// A segmented mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub name: String,
    pub mesh_id: u64,
    pub vertex_labels: Vec<u8>,
    pub face_labels: Vec<u8>,
    pub seed: u64,
}

impl SegmentationResult {
    pub fn from_vertex_labels(name: &str, mesh_id: u64, mesh: &TriMesh, vertex_labels: Vec<u8>, seed: u64) -> Result<Self, EvalError> {
        let face_labels = vertex_to_face_labels(mesh, &vertex_labels, seed, mesh_id)?;
        Ok(Self { name: name.to_string(), mesh_id, vertex_labels, face_labels, seed })
    }
}

/// `(1/A) Σ_{correct faces} a_j` with both sums in ascending face order.
pub fn mesh_accuracy(areas: &[f64], predicted: &[u8], truth: &[u8]) -> Result<f64, EvalError> {
    if predicted.len() != areas.len() || truth.len() != areas.len() {
        return Err(EvalError::CountMismatch {
            what: "face labels".into(),
            expected: areas.len(),
            found: if predicted.len() != areas.len() { predicted.len() } else { truth.len() },
        });
    }
    let mut total = 0.0;
    let mut correct = 0.0;
    for j in 0..areas.len() {
        total += areas[j];
        if predicted[j] == truth[j] {
            correct += areas[j];
        }
    }
    Ok(correct / total)
}

/// Area-weighted accuracy over a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub acc: f64,
    pub per_mesh: Vec<(String, f64)>,
}

/// Input to [`accuracy`]: one mesh's face areas, predictions and truth.
#[derive(Debug, Clone, Copy)]
pub struct EvalMesh<'a> {
    pub name: &'a str,
    pub areas: &'a [f64],
    pub predicted: &'a [u8],
    pub truth: &'a [u8],
}

/// `ACC = (1/N) Σᵢ (1/Aᵢ) Σ_{j∈Jᵢ} a_ij`, meshes in the given order.
pub fn accuracy(meshes: &[EvalMesh]) -> Result<AccuracyReport, EvalError> {
    if meshes.is_empty() {
        return Err(EvalError::Empty);
    }
    let per_mesh: Vec<(String, f64)> = meshes
        .par_iter()
        .map(|m| {
            let a = mesh_accuracy(m.areas, m.predicted, m.truth)?;
            if !a.is_finite() {
                return Err(EvalError::ZeroArea(m.name.to_string()));
            }
            Ok((m.name.to_string(), a))
        })
        .collect::<Result<_, EvalError>>()?;
    let mut sum = 0.0;
    for (_, a) in &per_mesh {
        sum += a;
    }
    Ok(AccuracyReport { acc: sum / per_mesh.len() as f64, per_mesh })
}

/// Ground-truth face labels of a labeled mesh, transferred with the same vote.
pub fn truth_face_labels(mesh: &TriMesh, seed: u64, mesh_id: u64) -> Result<Vec<u8>, EvalError> {
    let labels = mesh.labels().ok_or(EvalError::CountMismatch {
        what: "ground-truth labels".into(),
        expected: mesh.vertex_count(),
        found: 0,
    })?;
    vertex_to_face_labels(mesh, labels, seed, mesh_id)
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub features: usize,
    pub acc: f64,
}

/// Text table with columns `method`, `#features`, `ACC`, followed by the
/// per-mesh breakdown of every row.
pub fn report_text(rows: &[(ReportRow, &AccuracyReport)]) -> String {
    let mut s = String::from("method\t#features\tACC\n");
    for (row, _) in rows {
        s.push_str(&format!("{}\t{}\t{:.2}%\n", row.method, row.features, 100.0 * row.acc));
    }
    for (row, rep) in rows {
        s.push_str(&format!("\n# per-mesh ACC: {}\n", row.method));
        for (name, a) in &rep.per_mesh {
            s.push_str(&format!("{name}\t{a:.6}\n"));
        }
    }
    s
}

pub fn label_colors(labels: &[u8]) -> Vec<[u8; 3]> {
    labels.iter().map(|&l| PALETTE[l as usize % LABEL_COUNT]).collect()
}

/// PLY with per-vertex RGB from [`PALETTE`].
pub fn export_colored(mesh: &TriMesh, vertex_labels: &[u8], path: &Path) -> Result<(), EvalError> {
    if vertex_labels.len() != mesh.vertex_count() {
        return Err(EvalError::CountMismatch {
            what: "vertex labels".into(),
            expected: mesh.vertex_count(),
            found: vertex_labels.len(),
        });
    }
    Ok(save_ply_colored(mesh, &label_colors(vertex_labels), path)?)
}

/// 1-nearest-neighbor labels (squared Euclidean distance, ties to the lower
/// training index) of `query` rows against `train` rows, both `width` wide.
pub fn nearest_neighbor_labels(train: &[f64], train_labels: &[u8], query: &[f64], width: usize) -> Vec<u8> {
    assert_eq!(train.len(), train_labels.len() * width);
    query
        .par_chunks(width)
        .map(|q| {
            let mut best = f64::INFINITY;
            let mut label = 0;
            for (t, &l) in train.chunks_exact(width).zip(train_labels) {
                let mut d = 0.0;
                for (a, b) in t.iter().zip(q) {
                    d += (a - b) * (a - b);
                }
                if d < best {
                    best = d;
                    label = l;
                }
            }
            label
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn voting_majority_and_tie_frequencies() {
        assert_eq!(vote([2, 2, 5], 0, 0, 0), 2);
        assert_eq!(vote([5, 2, 2], 0, 0, 0), 2);
        assert_eq!(vote([2, 5, 2], 0, 0, 0), 2);
        assert_eq!(vote([4, 4, 4], 0, 0, 0), 4);
        let x = vote([1, 2, 3], 7, 3, 11);
        assert_eq!(x, vote([1, 2, 3], 7, 3, 11));
        let mut hist = [0usize; 3];
        let trials = 30000;
        for f in 0..trials {
            hist[vote([0, 1, 2], 42, 1, f) as usize] += 1;
        }
        for h in hist {
            assert!((h as f64 / trials as f64 - 1.0 / 3.0).abs() < 0.01, "{hist:?}");
        }
    }

    #[test]
    fn eq4_worked_example() {
        let r = accuracy(&[EvalMesh { name: "m", areas: &[2.0, 1.0, 1.0], predicted: &[0, 1, 1], truth: &[0, 2, 2] }]).unwrap();
        assert_eq!(r.acc, 0.5);
        let all = accuracy(&[EvalMesh { name: "m", areas: &[2.0, 1.0], predicted: &[3, 4], truth: &[3, 4] }]).unwrap();
        assert_eq!(all.acc, 1.0);
        assert!(accuracy(&[EvalMesh { name: "m", areas: &[2.0], predicted: &[3, 4], truth: &[3] }]).is_err());
    }

    #[test]
    fn face_labels_need_every_vertex() {
        let m = synthetic::grid(2, 2, 1.0);
        let mut labels = vec![1u8; m.vertex_count()];
        assert_eq!(vertex_to_face_labels(&m, &labels, 0, 0).unwrap(), vec![1; m.face_count()]);
        labels[4] = 9;
        assert!(matches!(vertex_to_face_labels(&m, &labels, 0, 0), Err(EvalError::Unlabeled { vertex: 4, label: 9 })));
    }

    #[test]
    fn nearest_neighbor_picks_closest_row() {
        let train = [0.0, 0.0, 1.0, 1.0, 5.0, 5.0];
        let l = nearest_neighbor_labels(&train, &[3, 4, 5], &[0.9, 1.2, 4.0, 4.5, -1.0, 0.0], 2);
        assert_eq!(l, vec![4, 5, 3]);
    }
}
