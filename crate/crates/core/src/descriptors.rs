//! Per-vertex shape descriptors: wave kernel signature over the
//! Laplace–Beltrami spectrum, four discrete curvatures, and average
//! geodesic distance, followed by global min–max normalization.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geodesics::{avg_geodesic_distance, GeodesicBackend, GeodesicError};
use crate::linalg::{dot, CsrMatrix, LinalgError, SkylineCholesky};
use crate::mesh::{TriMesh, Vec3};
use crate::param::cotangent_weight;

pub const WKS_BANDS: usize = 26;
pub const CURVATURE_CHANNELS: usize = 4;

/// Values outside `[CLAMP_LO, CLAMP_HI]` after applying persisted stats are clamped.
pub const CLAMP_LO: f64 = -0.5;
pub const CLAMP_HI: f64 = 1.5;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("requested {k} eigenpairs but the mesh has only {n} vertices")]
    TooManyEigenpairs { k: usize, n: usize },
    #[error("eigensolver did not converge: worst relative residual {residual:e} with basis size {basis}")]
    NoConvergence { residual: f64, basis: usize },
    #[error("WKS needs at least {needed} eigenpairs, got {got}")]
    TooFewEigenpairs { needed: usize, got: usize },
    #[error("feature set '{0}' includes SI-HKS ('S'), which is not supported")]
    SiHksUnsupported(String),
    #[error("invalid feature set '{0}': use letters W (WKS), C (curvatures), A (AGD)")]
    BadFeatureSet(String),
    #[error("normalization stats: {0}")]
    Stats(String),
    #[error("empty descriptor collection")]
    Empty,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Cotangent stiffness matrix (positive semi-definite) of a mesh.
pub fn cotangent_laplacian(mesh: &TriMesh) -> CsrMatrix {
    let mut t = Vec::new();
    for v in 0..mesh.vertex_count() {
        let mut diag = 0.0;
        for &u in mesh.one_ring(v) {
            let w = cotangent_weight(mesh, v, u);
            t.push((v, u, -w));
            diag += w;
        }
        t.push((v, v, diag));
    }
    CsrMatrix::from_triplets(mesh.vertex_count(), &t)
}

/// Barycentric lumped mass: one third of the incident face areas.
pub fn lumped_mass(mesh: &TriMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.vertex_count()];
    for (f, face) in mesh.faces().iter().enumerate() {
        for &v in face {
            m[v] += mesh.face_areas()[f] / 3.0;
        }
    }
    m
}

/// The `K` smallest eigenpairs of `L φ = λ M φ`.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub eigenvalues: Vec<f64>,
    /// `eigenfunctions[k][v]`, mass-orthonormal.
    pub eigenfunctions: Vec<Vec<f64>>,
    pub mass: Vec<f64>,
}

const BLOCK: usize = 8;
const EIG_TOL: f64 = 1e-8;

fn m_dot(m: &[f64], a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).zip(m).map(|((x, y), w)| x * y * w).sum()
}

/// Appends `x` to the mass-orthonormal basis after two passes of Gram–Schmidt.
/// Returns false when `x` is (numerically) inside the span already.
fn orthonormalize_into(basis: &mut Vec<Vec<f64>>, mass: &[f64], mut x: Vec<f64>) -> bool {
    let norm0 = m_dot(mass, &x, &x).sqrt();
    if norm0 == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for q in basis.iter() {
            let c = m_dot(mass, q, &x);
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi -= c * qi;
            }
        }
    }
    let norm = m_dot(mass, &x, &x).sqrt();
    if norm <= 1e-10 * norm0 {
        return false;
    }
    x.iter_mut().for_each(|v| *v /= norm);
    basis.push(x);
    true
}

/// Rayleigh–Ritz on the mass-orthonormal basis `v`: eigenpairs of `VᵀLV`.
fn rayleigh_ritz(l: &CsrMatrix, v: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>, Vec<Vec<f64>>) {
    let m = v.len();
    let lv: Vec<Vec<f64>> = v.iter().map(|x| l.mul_vec(x)).collect();
    let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&v[i], &lv[j]) + dot(&v[j], &lv[i])));
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs, lv)
}

/// Computes the `k` smallest eigenpairs by a shift-inverted block Krylov
/// method with full reorthogonalization and Rayleigh–Ritz extraction.
///
/// The basis grows in blocks of 8 (so eigenvalues of multiplicity up to 8
/// are resolved from the start) until every wanted Ritz pair has relative
/// residual below 1e-8 (scaled by `|λ| + max(σ, 1e-4 λ_k)` so the null mode
/// is not held to an unreachable standard), or the basis spans the whole space.
pub fn eigenbasis(mesh: &TriMesh, k: usize, seed: u64) -> Result<SpectralBasis, DescriptorError> {
    let n = mesh.vertex_count();
    if k >= n {
        return Err(DescriptorError::TooManyEigenpairs { k, n });
    }
    let l = cotangent_laplacian(mesh);
    let mass = lumped_mass(mesh);
    let trace_l: f64 = l.diagonal().iter().sum();
    let trace_m: f64 = mass.iter().sum();
    let sigma = 1e-6 * trace_l / trace_m;
    let mut shifted = Vec::new();
    for i in 0..n {
        for (j, v) in l.row(i) {
            shifted.push((i, j, v));
        }
        shifted.push((i, i, sigma * mass[i]));
    }
    let chol = SkylineCholesky::factor(&CsrMatrix::from_triplets(n, &shifted))?;
    let apply = |x: &[f64]| -> Vec<f64> {
        let mx: Vec<f64> = x.iter().zip(&mass).map(|(a, b)| a * b).collect();
        chol.solve(&mx)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut frontier: Vec<Vec<f64>> = Vec::new();
    for _ in 0..BLOCK.min(n) {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if orthonormalize_into(&mut basis, &mass, x) {
            frontier.push(basis.last().unwrap().clone());
        }
    }
    let check_every = (k / 2).max(BLOCK);
    let mut next_check = (k + 2 * BLOCK).min(n);
    loop {
        if basis.len() >= next_check || basis.len() >= n {
            let (vals, vecs, lv) = rayleigh_ritz(&l, &basis);
            let m = basis.len();
            let mut worst: f64 = 0.0;
            let mut funcs = Vec::with_capacity(k);
            // residuals of (near-)null modes sit at a rounding floor that grows
            // with the basis; measure them against a small fraction of the
            // wanted spectrum instead of the tiny shift alone
            let floor = sigma.max(1e-4 * vals[k - 1].abs());
            for c in 0..k {
                let mut y = vec![0.0; n];
                let mut ly = vec![0.0; n];
                for r in 0..m {
                    let s = vecs[(r, c)];
                    for i in 0..n {
                        y[i] += s * basis[r][i];
                        ly[i] += s * lv[r][i];
                    }
                }
                let lam = vals[c];
                let res: f64 = ly.iter().zip(&y).zip(&mass).map(|((a, b), w)| (a - lam * w * b).powi(2)).sum::<f64>().sqrt();
                let scale: f64 = (lam.abs() + floor) * y.iter().zip(&mass).map(|(b, w)| (w * b).powi(2)).sum::<f64>().sqrt();
                worst = worst.max(res / scale);
                funcs.push(y);
            }
            if worst <= EIG_TOL || m >= n {
                if worst > 1e-6 {
                    return Err(DescriptorError::NoConvergence { residual: worst, basis: m });
                }
                let eigenvalues = vals[..k].iter().map(|&v| v.max(0.0)).collect();
                return Ok(SpectralBasis { eigenvalues, eigenfunctions: funcs, mass });
            }
            next_check = (basis.len() + check_every).min(n);
        }
        let mut new_frontier = Vec::new();
        for x in &frontier {
            if basis.len() >= n {
                break;
            }
            if orthonormalize_into(&mut basis, &mass, apply(x)) {
                new_frontier.push(basis.last().unwrap().clone());
            }
        }
        // restart exhausted directions with fresh random vectors
        while new_frontier.len() < BLOCK.min(n - basis.len().min(n)) {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if orthonormalize_into(&mut basis, &mass, apply(&x)) {
                new_frontier.push(basis.last().unwrap().clone());
            }
        }
        frontier = new_frontier;
    }
}

/// Wave kernel signature at `bands` log-spaced energies spanning
/// `[log λ₁, log λ_{K−1}]`, Gaussian width 7 energy steps, normalized per
/// energy by the sum of Gaussian weights. Output is `n × bands`, row-major.
pub fn wks(basis: &SpectralBasis, bands: usize) -> Result<Vec<f64>, DescriptorError> {
    let k = basis.eigenvalues.len();
    if k < bands || k < 3 {
        return Err(DescriptorError::TooFewEigenpairs { needed: bands.max(3), got: k });
    }
    let n = basis.mass.len();
    let log_l: Vec<f64> = basis.eigenvalues[1..].iter().map(|&l| l.max(f64::MIN_POSITIVE).ln()).collect();
    let (e_min, e_max) = (log_l[0], *log_l.last().unwrap());
    let step = if bands > 1 { (e_max - e_min) / (bands - 1) as f64 } else { 1.0 };
    // degenerate spectra (all wanted eigenvalues equal) would give a zero width
    let sigma = (7.0 * step).max(1e-3);
    let mut out = vec![0.0; n * bands];
    for b in 0..bands {
        let e = e_min + b as f64 * step;
        let weights: Vec<f64> = log_l.iter().map(|&ll| (-(e - ll).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
        let total: f64 = weights.iter().sum();
        for (w, phi) in weights.iter().zip(&basis.eigenfunctions[1..]) {
            let c = w / total;
            for v in 0..n {
                out[v * bands + b] += c * phi[v] * phi[v];
            }
        }
    }
    Ok(out)
}

/// Meyer et al. mixed Voronoi area per vertex.
pub fn mixed_areas(mesh: &TriMesh) -> Vec<f64> {
    let mut area = vec![0.0; mesh.vertex_count()];
    for (f, face) in mesh.faces().iter().enumerate() {
        let p = face.map(|v| mesh.vertex(v));
        let fa = mesh.face_areas()[f];
        let angle = |k: usize| crate::mesh::angle_between(&(p[(k + 1) % 3] - p[k]), &(p[(k + 2) % 3] - p[k]));
        let ang = [angle(0), angle(1), angle(2)];
        let obtuse = ang.iter().position(|&a| a > PI / 2.0);
        for k in 0..3 {
            area[face[k]] += match obtuse {
                None => {
                    // Voronoi region: ⅛ Σ |e|² cot(opposite angle) over the two edges at k
                    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                    ((p[k] - p[i]).norm_squared() / ang[j].tan() + (p[k] - p[j]).norm_squared() / ang[i].tan()) / 8.0
                }
                Some(o) if o == k => fa / 2.0,
                Some(_) => fa / 4.0,
            };
        }
    }
    area
}

/// Per-vertex `(C_min, C_max, C_mean, C_gauss)`.
pub fn curvatures(mesh: &TriMesh) -> Vec<[f64; 4]> {
    let area = mixed_areas(mesh);
    (0..mesh.vertex_count())
        .map(|v| {
            let a = area[v];
            // angle sums carry ~1e-15 rounding; snap flat vertices to exactly flat so
            // the square root in the principal curvatures does not amplify it
            let deficit = mesh.angle_deficit(v);
            let deficit = if deficit.abs() < 1e-12 { 0.0 } else { deficit };
            let gauss = deficit / a;
            let p = mesh.vertex(v);
            let mut hn = Vec3::zeros();
            for &u in mesh.one_ring(v) {
                hn += 2.0 * cotangent_weight(mesh, v, u) * (p - mesh.vertex(u));
            }
            hn /= 2.0 * a;
            let sign = if hn.dot(&mesh.vertex_normal(v)) < 0.0 { -1.0 } else { 1.0 };
            let mean = sign * 0.5 * hn.norm();
            let disc = (mean * mean - gauss).max(0.0).sqrt();
            [mean - disc, mean + disc, mean, gauss]
        })
        .collect()
}

/// Descriptor family used for normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Wks,
    Curvature,
    Agd,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Wks => "wks",
            Family::Curvature => "curvature",
            Family::Agd => "agd",
        }
    }

    fn letter(self) -> char {
        match self {
            Family::Wks => 'W',
            Family::Curvature => 'C',
            Family::Agd => 'A',
        }
    }

    pub fn channels(self, bands: usize) -> usize {
        match self {
            Family::Wks => bands,
            Family::Curvature => CURVATURE_CHANNELS,
            Family::Agd => 1,
        }
    }
}

impl FromStr for Family {
    type Err = DescriptorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wks" => Ok(Family::Wks),
            "curvature" => Ok(Family::Curvature),
            "agd" => Ok(Family::Agd),
            _ => Err(DescriptorError::Stats(format!("unknown family '{s}'"))),
        }
    }
}

/// Which descriptor families enter the feature vector, in channel order
/// WKS, curvatures, AGD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSet(Vec<Family>);

impl FeatureSet {
    pub fn all() -> Self {
        FeatureSet(vec![Family::Wks, Family::Curvature, Family::Agd])
    }

    pub fn families(&self) -> &[Family] {
        &self.0
    }

    pub fn contains(&self, f: Family) -> bool {
        self.0.contains(&f)
    }

    pub fn channel_count(&self, bands: usize) -> usize {
        self.0.iter().map(|f| f.channels(bands)).sum()
    }

    /// Channel names in storage order.
    pub fn channel_names(&self, bands: usize) -> Vec<String> {
        let mut names = Vec::new();
        for f in &self.0 {
            match f {
                Family::Wks => names.extend((0..bands).map(|b| format!("wks{b}"))),
                Family::Curvature => names.extend(["c_min", "c_max", "c_mean", "c_gauss"].map(String::from)),
                Family::Agd => names.push("agd".into()),
            }
        }
        names
    }
}

impl FromStr for FeatureSet {
    type Err = DescriptorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        if upper.contains('S') {
            return Err(DescriptorError::SiHksUnsupported(s.into()));
        }
        let mut fams = Vec::new();
        for c in upper.chars() {
            let f = match c {
                'W' => Family::Wks,
                'C' => Family::Curvature,
                'A' => Family::Agd,
                _ => return Err(DescriptorError::BadFeatureSet(s.into())),
            };
            if fams.contains(&f) {
                return Err(DescriptorError::BadFeatureSet(s.into()));
            }
            fams.push(f);
        }
        if fams.is_empty() {
            return Err(DescriptorError::BadFeatureSet(s.into()));
        }
        fams.sort();
        Ok(FeatureSet(fams))
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fam in &self.0 {
            write!(f, "{}", fam.letter())?;
        }
        Ok(())
    }
}

/// Descriptor computation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorConfig {
    pub eigenpairs: usize,
    pub bands: usize,
    pub agd_samples: usize,
    pub backend: GeodesicBackend,
    pub features: FeatureSet,
    pub seed: u64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            eigenpairs: 100,
            bands: WKS_BANDS,
            agd_samples: 100,
            backend: GeodesicBackend::Exact,
            features: FeatureSet::all(),
            seed: 0,
        }
    }
}

/// Per-vertex descriptors of one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub vertex_count: usize,
    pub bands: usize,
    /// `vertex_count × bands`, row-major.
    pub wks: Vec<f64>,
    pub curvatures: Vec<[f64; 4]>,
    pub agd: Vec<f64>,
}

impl DescriptorSet {
    /// Computes every family (unused ones are cheap to skip via `features`).
    pub fn compute(mesh: &TriMesh, cfg: &DescriptorConfig) -> Result<Self, DescriptorError> {
        let n = mesh.vertex_count();
        let wks_vals = if cfg.features.contains(Family::Wks) {
            let k = cfg.eigenpairs.min(n - 1);
            let basis = eigenbasis(mesh, k, cfg.seed)?;
            wks(&basis, cfg.bands)?
        } else {
            vec![0.0; n * cfg.bands]
        };
        let curv = if cfg.features.contains(Family::Curvature) { curvatures(mesh) } else { vec![[0.0; 4]; n] };
        let agd = if cfg.features.contains(Family::Agd) {
            avg_geodesic_distance(mesh, cfg.agd_samples, cfg.backend)?
        } else {
            vec![0.0; n]
        };
        Ok(Self { vertex_count: n, bands: cfg.bands, wks: wks_vals, curvatures: curv, agd })
    }

    fn family_values(&self, f: Family) -> Box<dyn Iterator<Item = f64> + '_> {
        match f {
            Family::Wks => Box::new(self.wks.iter().copied()),
            Family::Curvature => Box::new(self.curvatures.iter().flatten().copied()),
            Family::Agd => Box::new(self.agd.iter().copied()),
        }
    }

    fn map_family(&mut self, f: Family, g: impl Fn(f64) -> f64) {
        match f {
            Family::Wks => self.wks.iter_mut().for_each(|x| *x = g(*x)),
            Family::Curvature => self.curvatures.iter_mut().flatten().for_each(|x| *x = g(*x)),
            Family::Agd => self.agd.iter_mut().for_each(|x| *x = g(*x)),
        }
    }

    /// Row-major `vertex_count × channels` matrix of the selected families.
    pub fn matrix(&self, features: &FeatureSet) -> Vec<f64> {
        let width = features.channel_count(self.bands);
        let mut out = Vec::with_capacity(self.vertex_count * width);
        for v in 0..self.vertex_count {
            for f in features.families() {
                match f {
                    Family::Wks => out.extend_from_slice(&self.wks[v * self.bands..(v + 1) * self.bands]),
                    Family::Curvature => out.extend_from_slice(&self.curvatures[v]),
                    Family::Agd => out.push(self.agd[v]),
                }
            }
        }
        out
    }
}

/// Family-wise `(min, max)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub entries: Vec<(Family, f64, f64)>,
}

impl NormStats {
    /// Min and max over the whole collection, per family.
    pub fn from_collection(sets: &[DescriptorSet], features: &FeatureSet) -> Result<Self, DescriptorError> {
        if sets.is_empty() {
            return Err(DescriptorError::Empty);
        }
        let entries = features
            .families()
            .iter()
            .map(|&f| {
                let (lo, hi) = sets
                    .iter()
                    .flat_map(|s| s.family_values(f))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
                (f, lo, hi)
            })
            .collect();
        Ok(Self { entries })
    }

    pub fn get(&self, f: Family) -> Option<(f64, f64)> {
        self.entries.iter().find(|e| e.0 == f).map(|e| (e.1, e.2))
    }

    /// Applies `(x − min)/(max − min)`, clamping to `[−0.5, 1.5]`; a
    /// constant family maps to 0.5. Returns the number of clamped values.
    pub fn apply(&self, set: &mut DescriptorSet) -> usize {
        let mut clamped = 0;
        for &(f, lo, hi) in &self.entries {
            if hi > lo {
                let count = set.family_values(f).filter(|&x| {
                    let y = (x - lo) / (hi - lo);
                    !(CLAMP_LO..=CLAMP_HI).contains(&y)
                }).count();
                clamped += count;
                set.map_family(f, |x| ((x - lo) / (hi - lo)).clamp(CLAMP_LO, CLAMP_HI));
            } else {
                log::warn!("descriptor family {} is constant ({lo}); mapping it to 0.5", f.name());
                set.map_family(f, |_| 0.5);
            }
        }
        clamped
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(f, lo, hi)| format!("{} {lo:e} {hi:e}\n", f.name())).collect()
    }

    pub fn parse(text: &str) -> Result<Self, DescriptorError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(DescriptorError::Stats(format!("line {}: expected 'family min max'", i + 1)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| DescriptorError::Stats(format!("line {}: bad number '{s}'", i + 1)));
            entries.push((parts[0].parse()?, num(parts[1])?, num(parts[2])?));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), DescriptorError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self, DescriptorError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Computes stats over `sets` and normalizes every set in place.
pub fn normalize_global(sets: &mut [DescriptorSet], features: &FeatureSet) -> Result<NormStats, DescriptorError> {
    let stats = NormStats::from_collection(sets, features)?;
    for s in sets.iter_mut() {
        stats.apply(s);
    }
    Ok(stats)
}
