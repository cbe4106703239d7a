//! Run configuration: flat `key = value` text with section prefixes
//! (`pipeline.m = 1000`, or `m = 1000` under a `[pipeline]` header).
//! Later assignments override earlier ones, so command-line `--set`
//! overrides are simply applied after the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classifier::{Architecture, ClassifierConfig, LrSchedule};
use crate::descriptors::{DescriptorConfig, FeatureSet};
use crate::features::{sha256_hex, PipelineConfig};
use crate::geodesics::GeodesicBackend;
use crate::linalg::SolverKind;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "PATCHSEG_WORKERS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value '{value}' for '{key}': {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

/// Input and output locations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    /// Directory of `.off`/`.obj`/`.ply` meshes.
    pub meshes: Option<PathBuf>,
    /// Directory of `<mesh stem>.labels` files (defaults to `meshes`).
    pub labels: Option<PathBuf>,
    /// Directory of optional `<mesh stem>.landmarks` files.
    pub landmarks: Option<PathBuf>,
    pub output: PathBuf,
    /// Normalization stats to reuse (defaults to `<dataset>/stats.txt` at prediction).
    pub stats: Option<PathBuf>,
    /// Dataset directory (defaults to `<output>/dataset`).
    pub dataset: Option<PathBuf>,
    /// Model file (defaults to `<output>/model.pgmd`).
    pub model: Option<PathBuf>,
    /// Prediction directory (defaults to `<output>/predictions`).
    pub predictions: Option<PathBuf>,
}

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads (None: rayon default).
    pub workers: Option<usize>,
    pub paths: Paths,
    pub pipeline: PipelineConfig,
    pub descriptors: DescriptorConfig,
    pub train: ClassifierConfig,
    /// Vertices charted by `export-charts`.
    pub export_vertices: Vec<usize>,
    /// Mesh (file stem) charted by `export-charts`; all meshes when empty.
    pub export_mesh: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            paths: Paths { output: PathBuf::from("out"), ..Default::default() },
            pipeline: PipelineConfig::default(),
            descriptors: DescriptorConfig::default(),
            train: ClassifierConfig::default(),
            export_vertices: vec![0],
            export_mesh: String::new(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue { key: key.into(), value: value.into(), reason: e.to_string() })
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let key = key.trim();
        match key {
            "seed" => {
                self.seed = parse_value(key, v)?;
                self.descriptors.seed = self.seed;
                self.train.seed = self.seed;
            }
            "workers" => self.workers = if v.is_empty() { None } else { Some(parse_value(key, v)?) },
            "paths.meshes" => self.paths.meshes = opt_path(v),
            "paths.labels" => self.paths.labels = opt_path(v),
            "paths.landmarks" => self.paths.landmarks = opt_path(v),
            "paths.output" => self.paths.output = PathBuf::from(v),
            "paths.stats" => self.paths.stats = opt_path(v),
            "paths.dataset" => self.paths.dataset = opt_path(v),
            "paths.model" => self.paths.model = opt_path(v),
            "paths.predictions" => self.paths.predictions = opt_path(v),
            "pipeline.m" => self.pipeline.m = parse_value(key, v)?,
            "pipeline.resolution" => self.pipeline.resolution = parse_value(key, v)?,
            "pipeline.backend" => self.pipeline.backend = parse_value::<GeodesicBackend>(key, v)?,
            "pipeline.solver" => {
                self.pipeline.solver = match v {
                    "cholesky" => SolverKind::Cholesky,
                    "cg" => SolverKind::ConjugateGradient { tolerance: 1e-12, max_iterations: 10_000 },
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: v.into(),
                            reason: "expected 'cholesky' or 'cg'".into(),
                        })
                    }
                }
            }
            "pipeline.cg_tolerance" | "pipeline.cg_max_iterations" => {
                let SolverKind::ConjugateGradient { tolerance, max_iterations } = &mut self.pipeline.solver else {
                    return Err(ConfigError::Invalid(format!("'{key}' requires pipeline.solver = cg (set it first)")));
                };
                if key.ends_with("tolerance") {
                    *tolerance = parse_value(key, v)?;
                } else {
                    *max_iterations = parse_value(key, v)?;
                }
            }
            "pipeline.radius_retries" => self.pipeline.radius_retries = parse_value(key, v)?,
            "pipeline.radius_growth" => self.pipeline.radius_growth = parse_value(key, v)?,
            "pipeline.max_skip_fraction" => self.pipeline.max_skip_fraction = parse_value(key, v)?,
            "pipeline.chunk" => self.pipeline.chunk = parse_value(key, v)?,
            "descriptors.eigenpairs" => self.descriptors.eigenpairs = parse_value(key, v)?,
            "descriptors.bands" => self.descriptors.bands = parse_value(key, v)?,
            "descriptors.agd_samples" => self.descriptors.agd_samples = parse_value(key, v)?,
            "descriptors.features" => self.descriptors.features = parse_value::<FeatureSet>(key, v)?,
            "train.arch" => self.train.arch = parse_value::<Architecture>(key, v)?,
            "train.epochs" => self.train.epochs = parse_value(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_value(key, v)?,
            "train.lr" => self.train.lr = parse_value::<LrSchedule>(key, v)?,
            "train.momentum" => self.train.momentum = parse_value(key, v)?,
            "train.per_label" => self.train.per_label = parse_value(key, v)?,
            "train.checkpoint_every" => self.train.checkpoint_every = parse_value(key, v)?,
            "export.vertices" => {
                self.export_vertices =
                    if v.is_empty() { Vec::new() } else { v.split(',').map(|t| parse_value(key, t.trim())).collect::<Result<_, _>>()? }
            }
            "export.mesh" => self.export_mesh = v.to_string(),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies a config text (comments start with `#`).
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, reason: format!("expected key = value, got '{line}'") })?;
            let key = if section.is_empty() { k.trim().to_string() } else { format!("{section}.{}", k.trim()) };
            self.set(&key, v).map_err(|e| ConfigError::Syntax { line: i + 1, reason: e.to_string() })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Invalid(format!("override '{o}' is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Worker count after the environment override.
    pub fn resolved_workers(&self) -> Result<Option<usize>, ConfigError> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) if !v.trim().is_empty() => {
                let n: usize = parse_value(WORKERS_ENV, v.trim())?;
                Ok(Some(n))
            }
            _ => Ok(self.workers),
        }
    }

    /// Range checks on every numeric setting.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.pipeline;
        let d = &self.descriptors;
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if p.m == 0 {
            return bad("pipeline.m must be positive".into());
        }
        if !(2..=512).contains(&p.resolution) {
            return bad(format!("pipeline.resolution {} outside 2..=512", p.resolution));
        }
        if !(p.radius_growth > 1.0) {
            return bad("pipeline.radius_growth must exceed 1".into());
        }
        if !(0.0..=1.0).contains(&p.max_skip_fraction) {
            return bad("pipeline.max_skip_fraction must lie in [0, 1]".into());
        }
        if p.chunk == 0 {
            return bad("pipeline.chunk must be positive".into());
        }
        if d.bands == 0 || d.eigenpairs <= d.bands {
            return bad(format!("descriptors.eigenpairs ({}) must exceed descriptors.bands ({})", d.eigenpairs, d.bands));
        }
        if d.agd_samples == 0 {
            return bad("descriptors.agd_samples must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Input width of the classifier: descriptor channels plus the mask.
    pub fn grid_channels(&self) -> usize {
        self.descriptors.features.channel_count(self.descriptors.bands) + 1
    }

    /// Full resolved configuration, one sorted `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut m = BTreeMap::new();
        let p = &self.pipeline;
        let d = &self.descriptors;
        let t = &self.train;
        m.insert("seed", self.seed.to_string());
        m.insert("workers", self.workers.map(|w| w.to_string()).unwrap_or_default());
        m.insert("paths.meshes", path_text(&self.paths.meshes));
        m.insert("paths.labels", path_text(&self.paths.labels));
        m.insert("paths.landmarks", path_text(&self.paths.landmarks));
        m.insert("paths.output", self.paths.output.display().to_string());
        m.insert("paths.stats", path_text(&self.paths.stats));
        m.insert("paths.dataset", path_text(&self.paths.dataset));
        m.insert("paths.model", path_text(&self.paths.model));
        m.insert("paths.predictions", path_text(&self.paths.predictions));
        m.insert("pipeline.m", p.m.to_string());
        m.insert("pipeline.resolution", p.resolution.to_string());
        m.insert("pipeline.backend", p.backend.to_string());
        match p.solver {
            SolverKind::Cholesky => {
                m.insert("pipeline.solver", "cholesky".into());
            }
            SolverKind::ConjugateGradient { tolerance, max_iterations } => {
                m.insert("pipeline.solver", "cg".into());
                m.insert("pipeline.cg_tolerance", tolerance.to_string());
                m.insert("pipeline.cg_max_iterations", max_iterations.to_string());
            }
        }
        m.insert("pipeline.radius_retries", p.radius_retries.to_string());
        m.insert("pipeline.radius_growth", p.radius_growth.to_string());
        m.insert("pipeline.max_skip_fraction", p.max_skip_fraction.to_string());
        m.insert("pipeline.chunk", p.chunk.to_string());
        m.insert("descriptors.eigenpairs", d.eigenpairs.to_string());
        m.insert("descriptors.bands", d.bands.to_string());
        m.insert("descriptors.agd_samples", d.agd_samples.to_string());
        m.insert("descriptors.features", d.features.to_string());
        m.insert("train.arch", t.arch.to_string());
        m.insert("train.epochs", t.epochs.to_string());
        m.insert("train.batch_size", t.batch_size.to_string());
        m.insert("train.lr", t.lr.to_string());
        m.insert("train.momentum", t.momentum.to_string());
        m.insert("train.per_label", t.per_label.to_string());
        m.insert("train.checkpoint_every", t.checkpoint_every.to_string());
        let ev: Vec<String> = self.export_vertices.iter().map(|v| v.to_string()).collect();
        m.insert("export.vertices", ev.join(","));
        m.insert("export.mesh", self.export_mesh.clone());
        // "pipeline.solver" must precede the cg keys when re-read
        let mut out = String::new();
        let solver = m.remove("pipeline.solver").unwrap();
        out.push_str(&format!("pipeline.solver = {solver}\n"));
        for (k, v) in m {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Hash of the settings that determine dataset contents.
    pub fn pipeline_hash(&self) -> String {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| l.starts_with("pipeline.") || l.starts_with("descriptors.") || l.starts_with("seed "))
            .filter(|l| !l.starts_with("pipeline.chunk"))
            .map(|l| format!("{l}\n"))
            .collect();
        sha256_hex(text.as_bytes())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.paths.dataset.clone().unwrap_or_else(|| self.paths.output.join("dataset"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths.model.clone().unwrap_or_else(|| self.paths.output.join("model.pgmd"))
    }

    pub fn predictions_dir(&self) -> PathBuf {
        self.paths.predictions.clone().unwrap_or_else(|| self.paths.output.join("predictions"))
    }

    pub fn stats_path(&self) -> PathBuf {
        self.paths.stats.clone().unwrap_or_else(|| self.dataset_dir().join("stats.txt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_and_sections() {
        let mut c = RunConfig::default();
        c.apply_text(
            "seed = 4\n[pipeline]\nm = 500 # comment\nresolution = 16\nsolver = cg\ncg_tolerance = 1e-10\n[train]\nlr = step:1e-2:1e-5:3:0.5\n",
        )
        .unwrap();
        assert_eq!(c.pipeline.m, 500);
        assert_eq!(c.train.seed, 4);
        assert_eq!(c.pipeline.solver, SolverKind::ConjugateGradient { tolerance: 1e-10, max_iterations: 10_000 });
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.pipeline_hash(), c.pipeline_hash());
        c.apply_overrides(&["pipeline.m=700"]).unwrap();
        assert_ne!(back.pipeline_hash(), c.pipeline_hash());
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("nope", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(c.set("descriptors.features", "WS").is_err());
        assert!(c.apply_text("pipeline.m\n").is_err());
        c.set("train.lr", "log:1e-9:1e-3").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("start > end"));
        let mut c = RunConfig::default();
        c.set("pipeline.resolution", "1").unwrap();
        assert!(c.validate().is_err());
        assert_eq!(RunConfig::default().grid_channels(), 32);
    }
}
