//! The batch commands behind the command-line frontend: `preprocess`,
//! `train`, `predict`, `evaluate` and `export-charts`.
//!
//! Every stage logs one `patchseg: stage=… mesh=… secs=…` line per mesh.
//! Output files never contain wall times or absolute paths, so reruns with
//! the same seed reproduce them byte for byte.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::{argmax, load_model, save_model, train, ClassifierError, Model, TrainReport};
use crate::config::{ConfigError, RunConfig};
use crate::descriptors::{DescriptorError, DescriptorSet, NormStats};
use crate::evaluation::{
    accuracy, export_colored, report_text, vertex_to_face_labels, AccuracyReport, EvalError, EvalMesh, ReportRow,
    SegmentationResult,
};
use crate::features::{
    chart_vertex, fill_from_nearest, process_mesh, sha256_hex, Dataset, DatasetManifest, FeatureError, ManifestMesh,
    PgrdWriter, Record,
};
use crate::geodesics::{diameter_endpoints, geodesic_ball, patch_radius, GeodesicError};
use crate::mesh::{load_labels, load_mesh, MeshError, TriMesh, LABEL_COUNT};
use crate::param::{solve_flow_field, FlowField, ParamError};
use crate::rasterize::sample_features;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("mesh {mesh}: {source}")]
    Mesh { mesh: String, source: MeshError },
    #[error("mesh {mesh}: missing label file {path}")]
    MissingLabels { mesh: String, path: PathBuf },
    #[error("mesh {mesh}: {source}")]
    Descriptor { mesh: String, source: DescriptorError },
    #[error("mesh {mesh}: flow field: {reason}")]
    Flow { mesh: String, reason: String },
    #[error("mesh {mesh}: {reason}")]
    Landmarks { mesh: String, reason: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("mesh {mesh}: {source}")]
    Eval { mesh: String, source: EvalError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("normalization stats not found at {0}; run `preprocess` on the training meshes first")]
    MissingStats(PathBuf),
    #[error("normalization stats {path} do not match the model (stats hash {found}, model expects {expected})")]
    StatsMismatch { path: PathBuf, found: String, expected: String },
    #[error("{0}")]
    Missing(String),
    #[error("no meshes (.off/.obj/.ply) found in {0}")]
    NoMeshes(PathBuf),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CommandError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), CommandError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn log_stage(stage: &str, mesh: &str, t0: Instant) {
    log::info!("patchseg: stage={stage} mesh={mesh} secs={:.3}", t0.elapsed().as_secs_f64());
}

/// Stable per-mesh id derived from the mesh name (used to seed tie-breaking).
pub fn mesh_id(name: &str) -> u64 {
    u64::from_str_radix(&sha256_hex(name.as_bytes())[..16], 16).unwrap()
}

/// A mesh read from disk.
#[derive(Debug, Clone)]
pub struct MeshInput {
    /// File stem.
    pub name: String,
    pub mesh: TriMesh,
    pub landmarks: Option<(Vec<usize>, Vec<usize>)>,
}

/// Mesh files in `dir`, sorted by file name.
pub fn discover_meshes(dir: &Path) -> Result<Vec<PathBuf>, CommandError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "off" | "obj" | "ply"))
                .unwrap_or(false)
        })
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(CommandError::NoMeshes(dir.to_path_buf()));
    }
    Ok(out)
}

/// Parses a landmarks file: `sources <ids…>` and `sinks <ids…>` lines.
pub fn parse_landmarks(text: &str, mesh: &str) -> Result<(Vec<usize>, Vec<usize>), CommandError> {
    let bad = |reason: String| CommandError::Landmarks { mesh: mesh.to_string(), reason };
    let (mut sources, mut sinks) = (Vec::new(), Vec::new());
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let mut toks = line.split_whitespace();
        let target = match toks.next() {
            Some("sources") => &mut sources,
            Some("sinks") => &mut sinks,
            _ => return Err(bad(format!("unexpected line '{line}'"))),
        };
        for t in toks {
            target.push(t.parse::<usize>().map_err(|_| bad(format!("bad vertex id '{t}'")))?);
        }
    }
    if sources.is_empty() || sinks.is_empty() {
        return Err(bad("landmarks need at least one source and one sink".into()));
    }
    Ok((sources, sinks))
}

pub fn landmarks_text(sources: &[usize], sinks: &[usize]) -> String {
    let j = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    format!("sources {}\nsinks {}\n", j(sources), j(sinks))
}

/// Loads every mesh of `paths.meshes`, with labels when `require_labels`.
pub fn load_inputs(cfg: &RunConfig, require_labels: bool) -> Result<Vec<MeshInput>, CommandError> {
    let dir = cfg.paths.meshes.clone().ok_or_else(|| CommandError::Missing("paths.meshes is not set".into()))?;
    let label_dir = cfg.paths.labels.clone().unwrap_or_else(|| dir.clone());
    discover_meshes(&dir)?
        .par_iter()
        .map(|path| {
            let name = path.file_stem().unwrap().to_string_lossy().to_string();
            let mesh_err = |source| CommandError::Mesh { mesh: name.clone(), source };
            let mut mesh = load_mesh(path, None).map_err(mesh_err)?;
            let lpath = label_dir.join(format!("{name}.labels"));
            if lpath.exists() {
                let labels = load_labels(&lpath).map_err(mesh_err)?;
                mesh = mesh.with_labels(labels).map_err(mesh_err)?;
            } else if require_labels {
                return Err(CommandError::MissingLabels { mesh: name, path: lpath });
            }
            let landmarks = match &cfg.paths.landmarks {
                Some(d) if d.join(format!("{name}.landmarks")).exists() => {
                    let p = d.join(format!("{name}.landmarks"));
                    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
                    Some(parse_landmarks(&text, &name)?)
                }
                _ => None,
            };
            Ok(MeshInput { name, mesh, landmarks })
        })
        .collect()
}

/// Flow field from the mesh's landmarks, or from approximate diameter
/// endpoints when none are given.
pub fn flow_for(input: &MeshInput, cfg: &RunConfig) -> Result<FlowField, CommandError> {
    let flow_err = |e: String| CommandError::Flow { mesh: input.name.clone(), reason: e };
    let (sources, sinks) = match &input.landmarks {
        Some(l) => l.clone(),
        None => {
            let (a, b) = diameter_endpoints(&input.mesh, cfg.pipeline.backend).map_err(|e: GeodesicError| flow_err(e.to_string()))?;
            (vec![a], vec![b])
        }
    };
    solve_flow_field(&input.mesh, &sources, &sinks, cfg.pipeline.solver).map_err(|e: ParamError| flow_err(e.to_string()))
}

fn descriptors_for(inputs: &[MeshInput], cfg: &RunConfig) -> Result<Vec<DescriptorSet>, CommandError> {
    inputs
        .iter()
        .map(|inp| {
            let t0 = Instant::now();
            let d = DescriptorSet::compute(&inp.mesh, &cfg.descriptors)
                .map_err(|source| CommandError::Descriptor { mesh: inp.name.clone(), source })?;
            log_stage("descriptors", &inp.name, t0);
            Ok(d)
        })
        .collect()
}

/// Per-mesh line of the preprocess summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshStat {
    pub name: String,
    pub vertices: usize,
    pub processed: usize,
    pub skipped: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSummary {
    pub meshes: Vec<MeshStat>,
    pub manifest: PathBuf,
    pub manifest_hash: String,
    pub clamped_values: usize,
}

impl PreprocessSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::from("mesh\tvertices\tprocessed\tskipped\tseconds\n");
        for m in &self.meshes {
            s.push_str(&format!("{}\t{}\t{}\t{}\t{:.1}\n", m.name, m.vertices, m.processed, m.skipped, m.seconds));
        }
        let total: usize = self.meshes.iter().map(|m| m.processed).sum();
        let skipped: usize = self.meshes.iter().map(|m| m.skipped).sum();
        s.push_str(&format!("total records {total}, skipped {skipped}, manifest {}\n", self.manifest.display()));
        s
    }
}

/// Config lines embedded in manifests (paths excluded so outputs do not
/// depend on where a run writes).
fn embedded_config(cfg: &RunConfig) -> Vec<(String, String)> {
    cfg.to_text()
        .lines()
        .filter(|l| !l.starts_with("paths.") && !l.starts_with("workers"))
        .filter_map(|l| l.split_once(" = ").map(|(k, v)| (format!("config.{k}"), v.to_string())))
        .collect()
}

/// Descriptors → normalization → charts → PGRD containers + manifest.
///
/// Normalization stats come from `paths.stats` when set (e.g. training
/// stats applied to a test set) and are otherwise computed from these
/// meshes. Either way they are copied to `<dataset>/stats.txt`.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<PreprocessSummary, CommandError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg, true)?;
    let dir = cfg.dataset_dir();
    create_dir(&dir)?;
    let mut sets = descriptors_for(&inputs, cfg)?;
    let features = &cfg.descriptors.features;
    let stats = match &cfg.paths.stats {
        Some(p) => {
            if !p.exists() {
                return Err(CommandError::MissingStats(p.clone()));
            }
            NormStats::load(p).map_err(|source| CommandError::Descriptor { mesh: "(stats)".into(), source })?
        }
        None => NormStats::from_collection(&sets, features)
            .map_err(|source| CommandError::Descriptor { mesh: "(collection)".into(), source })?,
    };
    let mut clamped = 0;
    for s in &mut sets {
        clamped += stats.apply(s);
    }
    if clamped > 0 {
        log::warn!("{clamped} normalized descriptor values were clamped to the allowed range");
    }
    let stats_path = dir.join("stats.txt");
    write_file(&stats_path, stats.to_text())?;

    let width = features.channel_count(cfg.descriptors.bands);
    let channels = width + 1;
    let mut channel_names = features.channel_names(cfg.descriptors.bands);
    channel_names.push("mask".into());
    let mut manifest = DatasetManifest {
        resolution: cfg.pipeline.resolution,
        channels,
        channel_names,
        stats_file: "stats.txt".into(),
        config_hash: cfg.pipeline_hash(),
        seed: cfg.seed,
        meshes: Vec::new(),
        label_counts: [0; LABEL_COUNT],
        extra: embedded_config(cfg).into_iter().collect(),
    };
    let mut stats_out = Vec::new();
    for (k, (inp, set)) in inputs.iter().zip(&sets).enumerate() {
        let t0 = Instant::now();
        let flow = flow_for(inp, cfg)?;
        let file = format!("{}.pgrd", inp.name);
        let mut writer = PgrdWriter::create(&dir.join(&file), cfg.pipeline.resolution, channels, true, k as u32)?;
        let matrix = set.matrix(features);
        let mut counts = [0u64; LABEL_COUNT];
        let summary = process_mesh(&inp.name, &inp.mesh, &matrix, width, &flow, &cfg.pipeline, |r: Record| {
            counts[r.label.unwrap() as usize] += 1;
            writer.push(&r)
        })?;
        writer.finish()?;
        for (a, c) in manifest.label_counts.iter_mut().zip(counts) {
            *a += c;
        }
        manifest.meshes.push(ManifestMesh {
            name: inp.name.clone(),
            file,
            records: summary.processed as u64,
            skipped: summary.skipped.iter().map(|s| s.0).collect(),
        });
        log_stage("charts", &inp.name, t0);
        log::info!(
            "patchseg: mesh={} charts={} polar={} fold_fallbacks={} unaligned={} skipped={}",
            inp.name,
            summary.processed,
            summary.polar,
            summary.fold_fallbacks,
            summary.unaligned,
            summary.skipped.len()
        );
        stats_out.push(MeshStat {
            name: inp.name.clone(),
            vertices: inp.mesh.vertex_count(),
            processed: summary.processed,
            skipped: summary.skipped.len(),
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    let manifest_path = dir.join("manifest.txt");
    manifest.save(&manifest_path)?;
    Ok(PreprocessSummary { meshes: stats_out, manifest: manifest_path, manifest_hash: manifest.hash(), clamped_values: clamped })
}

fn stats_hash(path: &Path) -> Result<String, CommandError> {
    if !path.exists() {
        return Err(CommandError::MissingStats(path.to_path_buf()));
    }
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

/// Trains on `<dataset>/manifest.txt`; writes the model, a report and
/// periodic checkpoints into the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<(Model, TrainReport), CommandError> {
    cfg.validate()?;
    let dir = cfg.dataset_dir();
    let manifest_path = dir.join("manifest.txt");
    if !manifest_path.exists() {
        return Err(CommandError::Missing(format!("no dataset manifest at {}; run `preprocess` first", manifest_path.display())));
    }
    let data = Dataset::open(&manifest_path)?;
    if data.manifest.channels != cfg.grid_channels() {
        return Err(FeatureError::ChannelMismatch { expected: cfg.grid_channels(), found: data.manifest.channels }.into());
    }
    let stats = stats_hash(&dir.join(&data.manifest.stats_file))?;
    let out = cfg.paths.output.clone();
    create_dir(&out)?;
    let t0 = Instant::now();
    let (model, report) = train(&data, &cfg.train, &stats, |epoch, m| {
        let p = out.join(format!("checkpoint_{:04}.pgmd", epoch + 1));
        save_model(m, &p)
    })?;
    log_stage("train", "(dataset)", t0);
    let model_path = cfg.model_path();
    if let Some(parent) = model_path.parent() {
        create_dir(parent)?;
    }
    save_model(&model, &model_path)?;
    write_file(&out.join("train_report.txt"), report.to_text())?;
    let mut run = String::new();
    for (k, v) in embedded_config(cfg) {
        run.push_str(&format!("{k}={v}\n"));
    }
    run.push_str(&format!("manifest_hash={}\nmodel_config_hash={}\n", model.manifest_hash, model.config_hash));
    write_file(&out.join("train_manifest.txt"), run)?;
    Ok((model, report))
}

/// Segments every mesh of `paths.meshes` with the trained model. Vertices
/// whose chart fails inherit the label of the nearest charted vertex.
pub fn cmd_predict(cfg: &RunConfig) -> Result<Vec<SegmentationResult>, CommandError> {
    cfg.validate()?;
    let model_path = cfg.model_path();
    if !model_path.exists() {
        return Err(CommandError::Missing(format!("no model at {}; run `train` first", model_path.display())));
    }
    let model = load_model(&model_path, None)?;
    let stats_path = cfg.stats_path();
    let found = stats_hash(&stats_path)?;
    if found != model.stats_hash {
        return Err(CommandError::StatsMismatch { path: stats_path, found, expected: model.stats_hash.clone() });
    }
    let stats = NormStats::load(&stats_path).map_err(|source| CommandError::Descriptor { mesh: "(stats)".into(), source })?;
    let width = cfg.descriptors.features.channel_count(cfg.descriptors.bands);
    model.expect_input(width + 1, cfg.pipeline.resolution)?;
    let inputs = load_inputs(cfg, false)?;
    let out = cfg.predictions_dir();
    create_dir(&out)?;
    let mut results = Vec::new();
    for inp in &inputs {
        let t0 = Instant::now();
        let mut set = DescriptorSet::compute(&inp.mesh, &cfg.descriptors)
            .map_err(|source| CommandError::Descriptor { mesh: inp.name.clone(), source })?;
        let clamped = stats.apply(&mut set);
        let flow = flow_for(inp, cfg)?;
        let matrix = set.matrix(&cfg.descriptors.features);
        let n = inp.mesh.vertex_count();
        let mut labels: Vec<Option<u8>> = vec![None; n];
        let mut pending: Vec<Record> = Vec::new();
        let classify = |pending: &mut Vec<Record>, labels: &mut Vec<Option<u8>>| {
            let preds: Vec<(usize, u8)> =
                pending.par_iter().map(|r| (r.vertex as usize, argmax(&model.net.predict(&r.data)) as u8)).collect();
            for (v, l) in preds {
                labels[v] = Some(l);
            }
            pending.clear();
        };
        let chunk = cfg.pipeline.chunk.max(1);
        let summary = process_mesh(&inp.name, &inp.mesh, &matrix, width, &flow, &cfg.pipeline, |r| {
            pending.push(r);
            if pending.len() >= chunk {
                classify(&mut pending, &mut labels);
            }
            Ok(())
        })?;
        classify(&mut pending, &mut labels);
        let filled = fill_from_nearest(&inp.mesh, &mut labels);
        let vertex_labels: Vec<u8> = labels.into_iter().map(|l| l.unwrap_or(0)).collect();
        let id = mesh_id(&inp.name);
        let result = SegmentationResult::from_vertex_labels(&inp.name, id, &inp.mesh, vertex_labels, cfg.seed)
            .map_err(|source| CommandError::Eval { mesh: inp.name.clone(), source })?;
        let lines = |v: &[u8]| v.iter().map(|l| format!("{l}\n")).collect::<String>();
        write_file(&out.join(format!("{}.labels", inp.name)), lines(&result.vertex_labels))?;
        write_file(&out.join(format!("{}.face_labels", inp.name)), lines(&result.face_labels))?;
        export_colored(&inp.mesh, &result.vertex_labels, &out.join(format!("{}.ply", inp.name)))
            .map_err(|source| CommandError::Eval { mesh: inp.name.clone(), source })?;
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let skipped: Vec<usize> = summary.skipped.iter().map(|s| s.0).collect();
        write_file(
            &out.join(format!("{}.meta", inp.name)),
            format!(
                "mesh={}\nvertices={n}\ncharted={}\npolar={}\nfold_fallbacks={}\nunaligned={}\nclamped_values={clamped}\nskipped={}\nfilled_from_nearest={}\nseed={}\nmodel_config_hash={}\n",
                inp.name,
                summary.processed,
                summary.polar,
                summary.fold_fallbacks,
                summary.unaligned,
                join(&skipped),
                join(&filled),
                cfg.seed,
                model.config_hash
            ),
        )?;
        log_stage("predict", &inp.name, t0);
        results.push(result);
    }
    Ok(results)
}

/// Area-weighted accuracy over the meshes of `paths.meshes` against their ground truth.
/// Ground-truth face labels come from `<stem>.face_labels` in the label
/// directory when present, otherwise from voting the vertex labels.
/// Writes `<output>/report.txt`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<AccuracyReport, CommandError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg, true)?;
    let pred_dir = cfg.predictions_dir();
    let label_dir = cfg.paths.labels.clone().or_else(|| cfg.paths.meshes.clone()).unwrap();
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for inp in &inputs {
        let id = mesh_id(&inp.name);
        let eval_err = |source| CommandError::Eval { mesh: inp.name.clone(), source };
        let ppath = pred_dir.join(format!("{}.labels", inp.name));
        if !ppath.exists() {
            return Err(CommandError::Missing(format!("mesh {}: no prediction file {}", inp.name, ppath.display())));
        }
        let vl = load_labels(&ppath).map_err(|source| CommandError::Mesh { mesh: inp.name.clone(), source })?;
        predicted.push(vertex_to_face_labels(&inp.mesh, &vl, cfg.seed, id).map_err(eval_err)?);
        let fpath = label_dir.join(format!("{}.face_labels", inp.name));
        let t = if fpath.exists() {
            load_labels(&fpath).map_err(|source| CommandError::Mesh { mesh: inp.name.clone(), source })?
        } else {
            vertex_to_face_labels(&inp.mesh, inp.mesh.labels().unwrap(), cfg.seed, id).map_err(eval_err)?
        };
        truth.push(t);
    }
    let evals: Vec<EvalMesh> = inputs
        .iter()
        .zip(predicted.iter().zip(&truth))
        .map(|(inp, (p, t))| EvalMesh { name: &inp.name, areas: inp.mesh.face_areas(), predicted: p, truth: t })
        .collect();
    let rep = accuracy(&evals).map_err(|source| CommandError::Eval { mesh: "(test set)".into(), source })?;
    let row = ReportRow {
        method: "patch-cnn".into(),
        features: cfg.descriptors.features.channel_count(cfg.descriptors.bands),
        acc: rep.acc,
    };
    create_dir(&cfg.paths.output)?;
    write_file(&cfg.paths.output.join("report.txt"), report_text(&[(row, &rep)]))?;
    Ok(rep)
}

/// Writes debug views of selected vertex charts: ball distances, disk
/// coordinates, raster cells and an ASCII PGM of the mask.
pub fn cmd_export_charts(cfg: &RunConfig) -> Result<Vec<PathBuf>, CommandError> {
    cfg.validate()?;
    let inputs = load_inputs(cfg, false)?;
    let out = cfg.paths.output.join("charts");
    create_dir(&out)?;
    let mut written = Vec::new();
    for inp in inputs.iter().filter(|i| cfg.export_mesh.is_empty() || i.name == cfg.export_mesh) {
        let flow = flow_for(inp, cfg)?;
        let radius = patch_radius(&inp.mesh, cfg.pipeline.m);
        for &v in &cfg.export_vertices {
            if v >= inp.mesh.vertex_count() {
                return Err(CommandError::Missing(format!("mesh {}: vertex {v} out of range", inp.name)));
            }
            let vc = chart_vertex(&inp.mesh, v, radius, &flow, &cfg.pipeline).map_err(|e| FeatureError::Vertex { vertex: v, source: e })?;
            let stem = out.join(format!("{}_v{v}", inp.name));
            let ball = geodesic_ball(&inp.mesh, v, vc.radius, cfg.pipeline.backend).map_err(FeatureError::from)?;
            let p = stem.with_extension("ball.txt");
            let mut buf = Vec::new();
            ball.write_debug(&mut buf).map_err(io_err(&p))?;
            write_file(&p, &buf)?;
            written.push(p);

            let p = stem.with_extension("param.txt");
            let mut buf = format!("# method={:?} aligned={} angle={}\n", vc.method, vc.aligned, vc.param.calibration_angle);
            for (i, &u) in vc.patch_vertices.iter().enumerate() {
                if vc.param.valid[i] {
                    buf.push_str(&format!("{u} {} {}\n", vc.param.coords[i].x, vc.param.coords[i].y));
                }
            }
            write_file(&p, buf)?;
            written.push(p);

            let p = stem.with_extension("cells.txt");
            let res = vc.chart.resolution;
            let mut buf = String::from("# i j face b0 b1 b2\n");
            for (k, c) in vc.chart.cells.iter().enumerate() {
                if let Some(f) = c.face {
                    buf.push_str(&format!("{} {} {f} {} {} {}\n", k % res, k / res, c.bary[0], c.bary[1], c.bary[2]));
                }
            }
            write_file(&p, buf)?;
            written.push(p);

            let p = stem.with_extension("mask.pgm");
            let ones = vec![1.0; inp.mesh.vertex_count()];
            let grid = sample_features(&vc.chart, &ones, 1, inp.mesh.vertex_count()).map_err(FeatureError::from)?;
            let mut f = fs::File::create(&p).map_err(io_err(&p))?;
            writeln!(f, "P2\n{res} {res}\n255").map_err(io_err(&p))?;
            for j in (0..res).rev() {
                let row: Vec<String> = (0..res).map(|i| ((grid.at(1, i, j) * 255.0) as u8).to_string()).collect();
                writeln!(f, "{}", row.join(" ")).map_err(io_err(&p))?;
            }
            written.push(p);
        }
    }
    Ok(written)
}
