//! Per-vertex chart pipeline (ball → patch → map → align → rasterize →
//! sample), the PGRD grid container, dataset manifests and the balanced
//! epoch sampler.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geodesics::{geodesic_ball, patch_radius, GeodesicBackend, GeodesicError};
use crate::linalg::SolverKind;
use crate::mesh::{TriMesh, LABEL_COUNT};
use crate::param::{align, extract_patch, geodesic_polar_map, harmonic_map, ChartMethod, DiskParam, FlowField, ParamError};
use crate::rasterize::{rasterize, sample_features, GridChart, RasterError};

pub const PGRD_MAGIC: &[u8; 4] = b"PGRD";
pub const PGRD_VERSION: u32 = 1;
pub const PGRD_HEADER_LEN: u64 = 64;
/// Per-record prefix: vertex id (u32), label, method, aligned, padding.
pub const RECORD_PREFIX_LEN: u64 = 8;
/// Label byte of records without ground truth.
pub const NO_LABEL: u8 = u8::MAX;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("vertex {vertex}: {source}")]
    Vertex { vertex: usize, source: ParamError },
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("mesh {mesh}: {skipped} of {total} vertices failed, above the {budget:.2}% budget")]
    TooManySkips { mesh: String, skipped: usize, total: usize, budget: f64 },
    #[error("vertex {vertex} has label {label}, outside 0..{LABEL_COUNT}")]
    BadLabel { vertex: usize, label: u8 },
    #[error("label {0} has no records")]
    EmptyLabel(u8),
    #[error("channel count mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("record {0} out of range")]
    RecordOutOfRange(usize),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FeatureError + '_ {
    move |source| FeatureError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, reason: impl Into<String>) -> FeatureError {
    FeatureError::Format { path: path.to_path_buf(), reason: reason.into() }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-vertex chart settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Patch radius is `sqrt(area / m)`.
    pub m: usize,
    pub resolution: usize,
    pub backend: GeodesicBackend,
    pub solver: SolverKind,
    /// Retries with a larger radius after a degenerate patch.
    pub radius_retries: usize,
    pub radius_growth: f64,
    /// Fraction of vertices allowed to fail per mesh.
    pub max_skip_fraction: f64,
    /// Vertices charted per parallel chunk before the writer drains them.
    pub chunk: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            m: 1000,
            resolution: 32,
            backend: GeodesicBackend::Exact,
            solver: SolverKind::Cholesky,
            radius_retries: 3,
            radius_growth: 1.5,
            max_skip_fraction: 0.01,
            chunk: 64,
        }
    }
}

/// A rasterized chart of one vertex's neighborhood.
#[derive(Debug, Clone)]
pub struct VertexChart {
    pub chart: GridChart,
    pub method: ChartMethod,
    pub aligned: bool,
    /// Radius actually used (after retries).
    pub radius: f64,
    /// The patch was a disk but its harmonic map folded over.
    pub fold_fallback: bool,
    /// Aligned disk coordinates, indexed like `patch_vertices`.
    pub param: DiskParam,
    pub patch_vertices: Vec<usize>,
}

/// Charts vertex `v`: harmonic map for disk patches, geodesic polar map for
/// non-disks and for folded harmonic maps; then flow alignment and
/// rasterization. Degenerate patches are retried with a grown radius.
pub fn chart_vertex(
    mesh: &TriMesh,
    v: usize,
    radius: f64,
    flow: &FlowField,
    cfg: &PipelineConfig,
) -> Result<VertexChart, ParamError> {
    let mut r = radius;
    let mut attempt = 0;
    loop {
        let ball = geodesic_ball(mesh, v, r, cfg.backend)?;
        let patch = match extract_patch(&ball) {
            Ok(p) => p,
            Err(ParamError::DegeneratePatch { .. }) if attempt < cfg.radius_retries => {
                attempt += 1;
                r *= cfg.radius_growth;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut fold_fallback = false;
        let param = if patch.is_disk {
            let h = harmonic_map(&patch, cfg.solver)?;
            if h.folded {
                fold_fallback = true;
                geodesic_polar_map(&patch)
            } else {
                h
            }
        } else {
            geodesic_polar_map(&patch)
        };
        let aligned = align(&param, &patch, flow);
        let chart = rasterize(&aligned, &patch, cfg.resolution);
        if chart.is_empty() {
            if attempt < cfg.radius_retries {
                attempt += 1;
                r *= cfg.radius_growth;
                continue;
            }
            return Err(ParamError::DegeneratePatch { center: v, reason: "chart covers no grid cell".into() });
        }
        return Ok(VertexChart {
            chart,
            method: aligned.method,
            aligned: aligned.aligned,
            radius: r,
            fold_fallback,
            patch_vertices: patch.sub.vertex_ids().to_vec(),
            param: aligned,
        });
    }
}

/// One serialized grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub vertex: u32,
    pub label: Option<u8>,
    pub method: ChartMethod,
    pub aligned: bool,
    /// `channels × resolution²`, channel-major, mask last.
    pub data: Vec<f32>,
}

/// Outcome of charting every vertex of one mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeshSummary {
    pub processed: usize,
    /// Failed vertices with their error messages.
    pub skipped: Vec<(usize, String)>,
    pub fold_fallbacks: usize,
    pub polar: usize,
    pub unaligned: usize,
}

/// Charts every vertex and hands the records to `sink` in ascending vertex
/// order. `features` is the normalized `vertex_count × width` matrix.
/// Fails when more than `max_skip_fraction` of the vertices fail.
pub fn process_mesh(
    name: &str,
    mesh: &TriMesh,
    features: &[f64],
    width: usize,
    flow: &FlowField,
    cfg: &PipelineConfig,
    mut sink: impl FnMut(Record) -> Result<(), FeatureError>,
) -> Result<MeshSummary, FeatureError> {
    let n = mesh.vertex_count();
    if features.len() != n * width {
        return Err(FeatureError::ChannelMismatch { expected: n * width, found: features.len() });
    }
    if let Some(labels) = mesh.labels() {
        if let Some((v, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= LABEL_COUNT) {
            return Err(FeatureError::BadLabel { vertex: v, label: l });
        }
    }
    let radius = patch_radius(mesh, cfg.m);
    let budget = (cfg.max_skip_fraction * n as f64).floor() as usize;
    let mut summary = MeshSummary::default();
    for start in (0..n).step_by(cfg.chunk.max(1)) {
        let end = (start + cfg.chunk.max(1)).min(n);
        let results: Vec<Result<(Record, bool), (usize, String)>> = (start..end)
            .into_par_iter()
            .map(|v| {
                let vc = chart_vertex(mesh, v, radius, flow, cfg).map_err(|e| (v, e.to_string()))?;
                let grid = sample_features(&vc.chart, features, width, n).map_err(|e| (v, e.to_string()))?;
                let record = Record {
                    vertex: v as u32,
                    label: mesh.labels().map(|l| l[v]),
                    method: vc.method,
                    aligned: vc.aligned,
                    data: grid.data.iter().map(|&x| x as f32).collect(),
                };
                Ok((record, vc.fold_fallback))
            })
            .collect();
        for r in results {
            match r {
                Ok((record, fold)) => {
                    summary.processed += 1;
                    summary.fold_fallbacks += fold as usize;
                    summary.polar += (record.method == ChartMethod::Polar) as usize;
                    summary.unaligned += (!record.aligned) as usize;
                    sink(record)?;
                }
                Err((v, msg)) => {
                    log::warn!("{name}: vertex {v} skipped: {msg}");
                    summary.skipped.push((v, msg));
                    if summary.skipped.len() > budget {
                        return Err(FeatureError::TooManySkips {
                            mesh: name.to_string(),
                            skipped: summary.skipped.len(),
                            total: n,
                            budget: cfg.max_skip_fraction * 100.0,
                        });
                    }
                }
            }
        }
    }
    Ok(summary)
}

/// Fixed-size header of a PGRD container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PgrdHeader {
    pub resolution: u32,
    pub channels: u32,
    pub records: u64,
    pub labeled: bool,
    pub mesh_id: u32,
}

impl PgrdHeader {
    pub fn record_floats(&self) -> usize {
        self.channels as usize * (self.resolution as usize).pow(2)
    }

    pub fn record_len(&self) -> u64 {
        RECORD_PREFIX_LEN + 4 * self.record_floats() as u64
    }

    fn to_bytes(self, index_offset: u64) -> [u8; PGRD_HEADER_LEN as usize] {
        let mut h = [0u8; PGRD_HEADER_LEN as usize];
        h[0..4].copy_from_slice(PGRD_MAGIC);
        h[4..8].copy_from_slice(&PGRD_VERSION.to_le_bytes());
        h[8..12].copy_from_slice(&self.resolution.to_le_bytes());
        h[12..16].copy_from_slice(&self.channels.to_le_bytes());
        h[16..24].copy_from_slice(&self.records.to_le_bytes());
        h[24] = self.labeled as u8;
        h[32..40].copy_from_slice(&index_offset.to_le_bytes());
        h[40..44].copy_from_slice(&self.mesh_id.to_le_bytes());
        h
    }
}

/// Streaming PGRD writer: records are appended as they arrive; the index
/// table and final header are written by [`PgrdWriter::finish`].
pub struct PgrdWriter {
    path: PathBuf,
    out: BufWriter<File>,
    header: PgrdHeader,
    offsets: Vec<u64>,
    pos: u64,
}

impl PgrdWriter {
    pub fn create(path: &Path, resolution: usize, channels: usize, labeled: bool, mesh_id: u32) -> Result<Self, FeatureError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut out = BufWriter::new(file);
        let header =
            PgrdHeader { resolution: resolution as u32, channels: channels as u32, records: 0, labeled, mesh_id };
        out.write_all(&header.to_bytes(0)).map_err(io_err(path))?;
        Ok(Self { path: path.to_path_buf(), out, header, offsets: Vec::new(), pos: PGRD_HEADER_LEN })
    }

    pub fn push(&mut self, r: &Record) -> Result<(), FeatureError> {
        if r.data.len() != self.header.record_floats() {
            return Err(FeatureError::ChannelMismatch { expected: self.header.record_floats(), found: r.data.len() });
        }
        if self.header.labeled && r.label.is_none() {
            return Err(format_err(&self.path, format!("record for vertex {} has no label", r.vertex)));
        }
        let mut buf = Vec::with_capacity(self.header.record_len() as usize);
        buf.extend_from_slice(&r.vertex.to_le_bytes());
        buf.push(r.label.unwrap_or(NO_LABEL));
        buf.push(r.method.tag());
        buf.push(r.aligned as u8);
        buf.push(0);
        for x in &r.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.out.write_all(&buf).map_err(io_err(&self.path))?;
        self.offsets.push(self.pos);
        self.pos += buf.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PgrdHeader, FeatureError> {
        let path = self.path.clone();
        for o in &self.offsets {
            self.out.write_all(&o.to_le_bytes()).map_err(io_err(&path))?;
        }
        self.header.records = self.offsets.len() as u64;
        let mut file = self.out.into_inner().map_err(|e| FeatureError::Io { path: path.clone(), source: e.into_error() })?;
        file.seek(SeekFrom::Start(0)).map_err(io_err(&path))?;
        file.write_all(&self.header.to_bytes(self.pos)).map_err(io_err(&path))?;
        file.sync_all().map_err(io_err(&path))?;
        Ok(self.header)
    }
}

/// Writes a complete container in one call.
pub fn write_pgrd(path: &Path, resolution: usize, channels: usize, mesh_id: u32, records: &[Record]) -> Result<PgrdHeader, FeatureError> {
    let labeled = !records.is_empty() && records.iter().all(|r| r.label.is_some());
    let mut w = PgrdWriter::create(path, resolution, channels, labeled, mesh_id)?;
    for r in records {
        w.push(r)?;
    }
    w.finish()
}

/// Random-access PGRD reader.
#[derive(Debug)]
pub struct PgrdReader {
    path: PathBuf,
    file: Mutex<BufReader<File>>,
    pub header: PgrdHeader,
    offsets: Vec<u64>,
    /// Label byte and vertex id of every record, read from the prefixes.
    labels: Vec<u8>,
    vertices: Vec<u32>,
}

impl PgrdReader {
    pub fn open(path: &Path) -> Result<Self, FeatureError> {
        let file = File::open(path).map_err(io_err(path))?;
        let len = file.metadata().map_err(io_err(path))?.len();
        let mut r = BufReader::new(file);
        let mut h = [0u8; PGRD_HEADER_LEN as usize];
        r.read_exact(&mut h).map_err(|_| format_err(path, "truncated header"))?;
        if &h[0..4] != PGRD_MAGIC {
            return Err(format_err(path, "bad magic (not a PGRD file)"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(h[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(h[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != PGRD_VERSION {
            return Err(format_err(path, format!("unsupported version {version}")));
        }
        let header = PgrdHeader {
            resolution: u32_at(8),
            channels: u32_at(12),
            records: u64_at(16),
            labeled: h[24] != 0,
            mesh_id: u32_at(40),
        };
        let index_offset = u64_at(32);
        let expect = PGRD_HEADER_LEN + header.records * header.record_len();
        if index_offset != expect || len != expect + 8 * header.records {
            return Err(format_err(path, format!("truncated or inconsistent file ({len} bytes)")));
        }
        r.seek(SeekFrom::Start(index_offset)).map_err(io_err(path))?;
        let mut idx = vec![0u8; 8 * header.records as usize];
        r.read_exact(&mut idx).map_err(io_err(path))?;
        let offsets: Vec<u64> = idx.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut labels = Vec::with_capacity(offsets.len());
        let mut vertices = Vec::with_capacity(offsets.len());
        for (i, &o) in offsets.iter().enumerate() {
            if o != PGRD_HEADER_LEN + i as u64 * header.record_len() {
                return Err(format_err(path, format!("index entry {i} points to {o}")));
            }
            r.seek(SeekFrom::Start(o)).map_err(io_err(path))?;
            let mut p = [0u8; RECORD_PREFIX_LEN as usize];
            r.read_exact(&mut p).map_err(io_err(path))?;
            vertices.push(u32::from_le_bytes(p[0..4].try_into().unwrap()));
            labels.push(p[4]);
        }
        Ok(Self { path: path.to_path_buf(), file: Mutex::new(r), header, offsets, labels, vertices })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Raw label byte of record `i` ([`NO_LABEL`] when unlabeled).
    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn vertex(&self, i: usize) -> u32 {
        self.vertices[i]
    }

    pub fn read(&self, i: usize) -> Result<Record, FeatureError> {
        let &o = self.offsets.get(i).ok_or(FeatureError::RecordOutOfRange(i))?;
        let mut buf = vec![0u8; self.header.record_len() as usize];
        {
            let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
            f.seek(SeekFrom::Start(o)).map_err(io_err(&self.path))?;
            f.read_exact(&mut buf).map_err(io_err(&self.path))?;
        }
        let method = ChartMethod::from_tag(buf[5]).ok_or_else(|| format_err(&self.path, format!("record {i}: bad method tag")))?;
        Ok(Record {
            vertex: u32::from_le_bytes(buf[0..4].try_into().unwrap()),
            label: (buf[4] != NO_LABEL).then_some(buf[4]),
            method,
            aligned: buf[6] != 0,
            data: buf[RECORD_PREFIX_LEN as usize..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        })
    }

    pub fn read_all(&self) -> Result<Vec<Record>, FeatureError> {
        (0..self.len()).map(|i| self.read(i)).collect()
    }
}

/// One mesh entry of a dataset manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestMesh {
    pub name: String,
    /// Container file name, relative to the manifest's directory.
    pub file: String,
    pub records: u64,
    pub skipped: Vec<usize>,
}

/// Key-value description of a dataset directory.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub resolution: usize,
    pub channels: usize,
    pub channel_names: Vec<String>,
    /// Normalization stats file, relative to the manifest's directory.
    pub stats_file: String,
    pub config_hash: String,
    pub seed: u64,
    pub meshes: Vec<ManifestMesh>,
    pub label_counts: [u64; LABEL_COUNT],
    /// Extra `key=value` pairs (e.g. the resolved run config).
    pub extra: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn total_records(&self) -> u64 {
        self.meshes.iter().map(|m| m.records).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv("format", "patchseg-dataset".into());
        kv("version", MANIFEST_VERSION.to_string());
        kv("resolution", self.resolution.to_string());
        kv("channels", self.channels.to_string());
        kv("channel_order", self.channel_names.join(","));
        kv("stats_file", self.stats_file.clone());
        kv("config_hash", self.config_hash.clone());
        kv("seed", self.seed.to_string());
        kv("mesh_count", self.meshes.len().to_string());
        for (i, m) in self.meshes.iter().enumerate() {
            kv(&format!("mesh.{i}.name"), m.name.clone());
            kv(&format!("mesh.{i}.file"), m.file.clone());
            kv(&format!("mesh.{i}.records"), m.records.to_string());
            let sk: Vec<String> = m.skipped.iter().map(|v| v.to_string()).collect();
            kv(&format!("mesh.{i}.skipped"), sk.join(","));
        }
        for (l, c) in self.label_counts.iter().enumerate() {
            kv(&format!("label.{l}.count"), c.to_string());
        }
        kv("total_records", self.total_records().to_string());
        for (k, v) in &self.extra {
            kv(&format!("extra.{k}"), v.clone());
        }
        s
    }

    /// SHA-256 of the manifest text; models record it as their training manifest.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, FeatureError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format_err(path, format!("line {}: expected key=value", i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| map.get(k).cloned().ok_or_else(|| format_err(path, format!("missing key '{k}'")));
        fn num<T: std::str::FromStr>(path: &Path, k: &str, v: String) -> Result<T, FeatureError> {
            v.parse().map_err(|_| format_err(path, format!("bad value '{v}' for '{k}'")))
        }
        if get("format")? != "patchseg-dataset" {
            return Err(format_err(path, "not a dataset manifest"));
        }
        let version: u32 = num(path, "version", get("version")?)?;
        if version != MANIFEST_VERSION {
            return Err(format_err(path, format!("unsupported manifest version {version}")));
        }
        let mesh_count: usize = num(path, "mesh_count", get("mesh_count")?)?;
        let mut meshes = Vec::with_capacity(mesh_count);
        for i in 0..mesh_count {
            let sk = get(&format!("mesh.{i}.skipped"))?;
            let skipped = if sk.is_empty() {
                Vec::new()
            } else {
                sk.split(',').map(|t| num(path, "skipped", t.to_string())).collect::<Result<_, _>>()?
            };
            meshes.push(ManifestMesh {
                name: get(&format!("mesh.{i}.name"))?,
                file: get(&format!("mesh.{i}.file"))?,
                records: num(path, "records", get(&format!("mesh.{i}.records"))?)?,
                skipped,
            });
        }
        let mut label_counts = [0u64; LABEL_COUNT];
        for (l, c) in label_counts.iter_mut().enumerate() {
            *c = num(path, "label count", get(&format!("label.{l}.count"))?)?;
        }
        let extra = map
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("extra.").map(|k| (k.to_string(), v.clone())))
            .collect();
        let channel_order = get("channel_order")?;
        let m = Self {
            resolution: num(path, "resolution", get("resolution")?)?,
            channels: num(path, "channels", get("channels")?)?,
            channel_names: channel_order.split(',').map(str::to_string).collect(),
            stats_file: get("stats_file")?,
            config_hash: get("config_hash")?,
            seed: num(path, "seed", get("seed")?)?,
            meshes,
            label_counts,
            extra,
        };
        if m.channel_names.len() != m.channels {
            return Err(format_err(path, "channel_order length differs from channels"));
        }
        let total: u64 = num(path, "total_records", get("total_records")?)?;
        if total != m.total_records() {
            return Err(format_err(path, "total_records differs from the per-mesh counts"));
        }
        let labeled: u64 = m.label_counts.iter().sum();
        if labeled != 0 && labeled != total {
            return Err(format_err(path, "per-label counts do not sum to total_records"));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        std::fs::write(path, self.to_text()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path)
    }
}

/// A manifest plus open readers for every container, addressed by global
/// record id (containers concatenated in manifest order).
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub dir: PathBuf,
    readers: Vec<PgrdReader>,
    /// `(reader, local record)` per global id.
    table: Vec<(usize, usize)>,
}

impl Dataset {
    pub fn open(manifest_path: &Path) -> Result<Self, FeatureError> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut readers = Vec::new();
        let mut table = Vec::new();
        for (k, m) in manifest.meshes.iter().enumerate() {
            let r = PgrdReader::open(&dir.join(&m.file))?;
            if r.header.channels as usize != manifest.channels {
                return Err(FeatureError::ChannelMismatch { expected: manifest.channels, found: r.header.channels as usize });
            }
            if r.header.resolution as usize != manifest.resolution || r.len() as u64 != m.records {
                return Err(format_err(&dir.join(&m.file), "container disagrees with the manifest"));
            }
            table.extend((0..r.len()).map(|i| (k, i)));
            readers.push(r);
        }
        Ok(Self { manifest, dir, readers, table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn reader(&self, mesh: usize) -> &PgrdReader {
        &self.readers[mesh]
    }

    /// Label byte of every record, by global id.
    pub fn labels(&self) -> Vec<u8> {
        (0..self.len()).map(|id| self.label(id)).collect()
    }

    /// Label byte of one record.
    pub fn label(&self, id: usize) -> u8 {
        let (k, i) = self.table[id];
        self.readers[k].label(i)
    }

    pub fn read(&self, id: usize) -> Result<Record, FeatureError> {
        let &(k, i) = self.table.get(id).ok_or(FeatureError::RecordOutOfRange(id))?;
        self.readers[k].read(i)
    }
}

/// Record ids of one training epoch: `per_label` draws from every label
/// (without replacement when the label has enough records), shuffled.
/// The stream is a function of `(seed, epoch)` only.
pub fn balanced_epoch_sampler(labels: &[u8], per_label: usize, seed: u64, epoch: u64) -> Result<Vec<usize>, FeatureError> {
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); LABEL_COUNT];
    for (id, &l) in labels.iter().enumerate() {
        if (l as usize) < LABEL_COUNT {
            by_label[l as usize].push(id);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut out = Vec::with_capacity(per_label * LABEL_COUNT);
    for (l, ids) in by_label.iter().enumerate() {
        if ids.is_empty() {
            return Err(FeatureError::EmptyLabel(l as u8));
        }
        if ids.len() >= per_label {
            out.extend(rand::seq::index::sample(&mut rng, ids.len(), per_label).into_iter().map(|k| ids[k]));
        } else {
            out.extend((0..per_label).map(|_| ids[rng.gen_range(0..ids.len())]));
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Fills unlabeled vertices with the label of the nearest labeled vertex,
/// nearest measured by shortest edge paths (ties: the smaller source vertex).
/// Returns the filled vertex ids.
pub fn fill_from_nearest(mesh: &TriMesh, labels: &mut [Option<u8>]) -> Vec<usize> {
    let n = mesh.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut origin = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    for v in 0..n {
        if labels[v].is_some() {
            dist[v] = 0.0;
            origin[v] = v;
            heap.push(Reverse((OrdF64(0.0), v, v)));
        }
    }
    while let Some(Reverse((OrdF64(d), src, v))) = heap.pop() {
        if d > dist[v] || (d == dist[v] && src > origin[v]) {
            continue;
        }
        for &w in mesh.one_ring(v) {
            let nd = d + mesh.edge_length(v, w);
            if nd < dist[w] || (nd == dist[w] && src < origin[w]) {
                dist[w] = nd;
                origin[w] = src;
                heap.push(Reverse((OrdF64(nd), src, w)));
            }
        }
    }
    let mut filled = Vec::new();
    for v in 0..n {
        if labels[v].is_none() && origin[v] != usize::MAX {
            labels[v] = labels[origin[v]];
            filled.push(v);
        }
    }
    filled
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::solve_flow_field;
    use crate::synthetic;

    fn toy_record(v: u32, label: Option<u8>, floats: usize) -> Record {
        Record {
            vertex: v,
            label,
            method: if v % 2 == 0 { ChartMethod::Harmonic } else { ChartMethod::Polar },
            aligned: v % 3 != 0,
            data: (0..floats).map(|k| (k as f32 * 0.37 + v as f32).sin()).collect(),
        }
    }

    #[test]
    fn pgrd_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgrd");
        let recs: Vec<Record> = (0..5).map(|v| toy_record(v, Some(v as u8), 3 * 16)).collect();
        let h = write_pgrd(&path, 4, 3, 7, &recs).unwrap();
        assert_eq!(h.records, 5);
        let r = PgrdReader::open(&path).unwrap();
        assert_eq!(r.header, h);
        assert_eq!(r.read_all().unwrap(), recs);
        assert_eq!(r.label(3), 3);
        assert_eq!(r.vertex(4), 4);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"PGRD");
        assert_eq!(bytes.len() as u64, 64 + 5 * (8 + 4 * 48) + 5 * 8);
    }

    #[test]
    fn pgrd_rejects_truncation_and_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgrd");
        write_pgrd(&path, 2, 2, 0, &[toy_record(0, None, 8), toy_record(1, None, 8)]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(PgrdReader::open(&path), Err(FeatureError::Format { .. })));
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(PgrdReader::open(&path).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn manifest_round_trip() {
        let m = DatasetManifest {
            resolution: 32,
            channels: 3,
            channel_names: vec!["a".into(), "b".into(), "mask".into()],
            stats_file: "stats.txt".into(),
            config_hash: sha256_hex(b"cfg"),
            seed: 9,
            meshes: vec![
                ManifestMesh { name: "m0".into(), file: "m0.pgrd".into(), records: 4, skipped: vec![] },
                ManifestMesh { name: "m1".into(), file: "m1.pgrd".into(), records: 2, skipped: vec![3, 8] },
            ],
            label_counts: [1, 1, 1, 1, 1, 1, 0, 0],
            extra: [("k".to_string(), "v".to_string())].into_iter().collect(),
        };
        let back = DatasetManifest::parse(&m.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, m);
        let mut bad = m.clone();
        bad.label_counts[0] = 5;
        assert!(DatasetManifest::parse(&bad.to_text(), Path::new("x")).is_err());
    }

    #[test]
    fn sampler_is_balanced_and_deterministic() {
        let mut labels = vec![];
        for l in 0..8u8 {
            let count = if l == 3 { 3 } else { 50 + 10 * l as usize };
            labels.extend(std::iter::repeat(l).take(count));
        }
        let a = balanced_epoch_sampler(&labels, 40, 5, 0).unwrap();
        assert_eq!(a.len(), 320);
        let mut hist = [0; 8];
        for &id in &a {
            hist[labels[id] as usize] += 1;
        }
        assert_eq!(hist, [40; 8]);
        assert_eq!(a, balanced_epoch_sampler(&labels, 40, 5, 0).unwrap());
        assert_ne!(a, balanced_epoch_sampler(&labels, 40, 5, 1).unwrap());
        // labels with enough records are drawn without replacement
        let l0: Vec<usize> = a.iter().copied().filter(|&id| labels[id] == 0).collect();
        let mut dedup = l0.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), l0.len());
        labels.retain(|&l| l != 5);
        assert!(matches!(balanced_epoch_sampler(&labels, 4, 0, 0), Err(FeatureError::EmptyLabel(5))));
    }

    #[test]
    fn chart_pipeline_on_sphere() {
        let mesh = synthetic::icosphere(1.0, 3);
        let n = mesh.vertex_count();
        let flow = solve_flow_field(&mesh, &[0], &[n - 1], SolverKind::Cholesky).unwrap();
        let cfg = PipelineConfig { m: 60, resolution: 8, ..Default::default() };
        let feats: Vec<f64> = (0..n).map(|v| mesh.vertex(v).z).collect();
        let mut recs = Vec::new();
        let s = process_mesh("sphere", &mesh, &feats, 1, &flow, &cfg, |r| {
            recs.push(r);
            Ok(())
        })
        .unwrap();
        assert_eq!(s.processed + s.skipped.len(), n);
        assert!(s.skipped.is_empty());
        assert_eq!(recs.len(), n);
        assert!(recs.windows(2).all(|w| w[0].vertex < w[1].vertex));
        for r in &recs {
            let mask = &r.data[64..];
            assert!(mask.iter().all(|&m| m == 0.0 || m == 1.0));
            assert!(mask.iter().any(|&m| m == 1.0));
        }
    }

    #[test]
    fn nearest_fill_copies_closest_label() {
        let mesh = synthetic::grid(4, 1, 1.0);
        let n = mesh.vertex_count();
        let mut labels: Vec<Option<u8>> = vec![None; n];
        labels[0] = Some(2);
        labels[n - 1] = Some(5);
        let filled = fill_from_nearest(&mesh, &mut labels);
        assert_eq!(filled.len(), n - 2);
        assert!(labels.iter().all(Option::is_some));
        assert_eq!(labels[1], Some(2));
        assert_eq!(labels[n - 2], Some(5));
    }
}
