//! Grid-to-label classifier: a small convolutional network trained with
//! SGD on mean cross-entropy over balanced epochs, and its model file.
//!
//! The network is generic over the float type so gradients can be checked
//! in `f64`; training and inference run in `f32`. Batch gradients are
//! accumulated in `f64` over fixed sample chunks, which makes them
//! independent of the order of records within a batch and of thread count.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{balanced_epoch_sampler, sha256_hex, Dataset, FeatureError};
use crate::mesh::LABEL_COUNT;

pub const PGMD_MAGIC: &[u8; 4] = b"PGMD";
pub const PGMD_VERSION: u32 = 1;
/// Samples per gradient chunk; chunk sums are reduced in chunk order.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("bad architecture '{spec}': {reason}")]
    Architecture { spec: String, reason: String },
    #[error("invalid classifier config: {0}")]
    Config(String),
    #[error("input shape mismatch: expected {expected_channels} channels at {expected_resolution}², found {found_channels} at {found_resolution}²")]
    Shape { expected_channels: usize, expected_resolution: usize, found_channels: usize, found_resolution: usize },
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("{path}: {reason}")]
    ModelFile { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// One layer of an architecture descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// `k×k` convolution, "same" zero padding, given stride and output width.
    Conv { k: usize, out: usize, stride: usize },
    Relu,
    /// Non-overlapping `p×p` max pooling.
    MaxPool(usize),
    /// Fully connected layer (flattens its input).
    Fc(usize),
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv { k, out, stride: 1 } => write!(f, "conv{k}x{k}:{out}"),
            LayerSpec::Conv { k, out, stride } => write!(f, "conv{k}x{k}:{out}/s{stride}"),
            LayerSpec::Relu => write!(f, "relu"),
            LayerSpec::MaxPool(p) => write!(f, "pool{p}"),
            LayerSpec::Fc(n) => write!(f, "fc:{n}"),
        }
    }
}

/// Comma-separated layer list, e.g. `conv3x3:16,relu,pool2,fc:8`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture(pub Vec<LayerSpec>);

impl Architecture {
    /// Three conv blocks (16/32/64, 3×3, 2×2 max-pool) and two FC layers.
    pub fn reference() -> Self {
        "conv3x3:16,relu,pool2,conv3x3:32,relu,pool2,conv3x3:64,relu,pool2,fc:128,relu,fc:8".parse().unwrap()
    }

    /// VGG16 with the first convolution's input width set by the data.
    pub fn vgg16() -> Self {
        let mut s = Vec::new();
        for (width, reps) in [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)] {
            for _ in 0..reps {
                s.push(format!("conv3x3:{width},relu"));
            }
            s.push("pool2".into());
        }
        s.push("fc:4096,relu,fc:4096,relu,fc:8".into());
        s.join(",").parse().unwrap()
    }

    pub fn output_width(&self) -> Option<usize> {
        match self.0.last() {
            Some(LayerSpec::Fc(n)) => Some(*n),
            _ => None,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for Architecture {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: String| ClassifierError::Architecture { spec: s.to_string(), reason };
        match s.trim() {
            "reference" => return Ok(Self::reference()),
            "vgg16" => return Ok(Self::vgg16()),
            _ => {}
        }
        let mut layers = Vec::new();
        for tok in s.split(',').map(str::trim) {
            let num = |t: &str| t.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| bad(format!("bad number in '{tok}'")));
            let layer = if tok == "relu" {
                LayerSpec::Relu
            } else if let Some(p) = tok.strip_prefix("pool") {
                LayerSpec::MaxPool(num(p)?)
            } else if let Some(n) = tok.strip_prefix("fc:") {
                LayerSpec::Fc(num(n)?)
            } else if let Some(rest) = tok.strip_prefix("conv") {
                let (kernel, tail) = rest.split_once(':').ok_or_else(|| bad(format!("'{tok}' lacks ':width'")))?;
                let (kx, ky) = kernel.split_once('x').ok_or_else(|| bad(format!("'{tok}' lacks a KxK kernel")))?;
                if kx != ky {
                    return Err(bad(format!("'{tok}': only square kernels are supported")));
                }
                let k = num(kx)?;
                if k % 2 == 0 {
                    return Err(bad(format!("'{tok}': kernel size must be odd")));
                }
                let (w, stride) = match tail.split_once("/s") {
                    Some((w, st)) => (num(w)?, num(st)?),
                    None => (num(tail)?, 1),
                };
                LayerSpec::Conv { k, out: w, stride }
            } else {
                return Err(bad(format!("unknown layer '{tok}'")));
            };
            layers.push(layer);
        }
        if !matches!(layers.last(), Some(LayerSpec::Fc(_))) {
            return Err(bad("the last layer must be fully connected".into()));
        }
        Ok(Self(layers))
    }
}

/// Per-epoch learning rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    /// `start · (end/start)^(e/(E−1))`: log-uniform decay hitting both endpoints.
    LogUniform { start: f64, end: f64 },
    /// `start · factor^⌊e/every⌋`, floored at `end`.
    Step { start: f64, end: f64, every: usize, factor: f64 },
}

impl LrSchedule {
    pub fn endpoints(&self) -> (f64, f64) {
        match *self {
            LrSchedule::LogUniform { start, end } | LrSchedule::Step { start, end, .. } => (start, end),
        }
    }

    pub fn rate(&self, epoch: usize, epochs: usize) -> f64 {
        match *self {
            LrSchedule::LogUniform { start, end } => {
                if epoch == 0 || epochs <= 1 {
                    return start;
                }
                if epoch + 1 >= epochs {
                    return end;
                }
                let t = epoch as f64 / (epochs - 1) as f64;
                (start.ln() + t * (end.ln() - start.ln())).exp()
            }
            LrSchedule::Step { start, end, every, factor } => (start * factor.powi((epoch / every.max(1)) as i32)).max(end),
        }
    }
}

impl fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LrSchedule::LogUniform { start, end } => write!(f, "log:{start:e}:{end:e}"),
            LrSchedule::Step { start, end, every, factor } => write!(f, "step:{start:e}:{end:e}:{every}:{factor}"),
        }
    }
}

impl FromStr for LrSchedule {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ClassifierError::Config(format!("bad LR schedule '{s}' (log:START:END or step:START:END:EVERY:FACTOR)"));
        let parts: Vec<&str> = s.split(':').collect();
        let f = |i: usize| parts.get(i).and_then(|t| t.parse::<f64>().ok()).ok_or_else(bad);
        match parts[0] {
            "log" if parts.len() == 3 => Ok(LrSchedule::LogUniform { start: f(1)?, end: f(2)? }),
            "step" if parts.len() == 5 => Ok(LrSchedule::Step {
                start: f(1)?,
                end: f(2)?,
                every: parts[3].parse().map_err(|_| bad())?,
                factor: f(4)?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub arch: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub momentum: f64,
    /// Balanced-sampler draws per label per epoch.
    pub per_label: usize,
    pub seed: u64,
    pub labels: usize,
    /// Write a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::reference(),
            epochs: 200,
            batch_size: 64,
            lr: LrSchedule::LogUniform { start: 1e-3, end: 1e-9 },
            momentum: 0.9,
            per_label: 5000,
            seed: 0,
            labels: LABEL_COUNT,
            checkpoint_every: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let (start, end) = self.lr.endpoints();
        if !(start > end && end > 0.0) {
            return Err(ClassifierError::Config(format!("LR must satisfy start > end > 0 (got start {start:e}, end {end:e})")));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.per_label == 0 {
            return Err(ClassifierError::Config("epochs, batch size and per-label count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ClassifierError::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.arch.output_width() != Some(self.labels) {
            return Err(ClassifierError::Config(format!(
                "architecture ends in {:?} outputs but there are {} labels",
                self.arch.output_width(),
                self.labels
            )));
        }
        Ok(())
    }

    /// Canonical text used for the config hash.
    pub fn to_text(&self) -> String {
        format!(
            "arch={}\nepochs={}\nbatch_size={}\nlr={}\nmomentum={}\nper_label={}\nseed={}\nlabels={}\n",
            self.arch, self.epochs, self.batch_size, self.lr, self.momentum, self.per_label, self.seed, self.labels
        )
    }
}

/// Channels × height × width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer<T> {
    Conv { k: usize, stride: usize, input: Shape, output: Shape, w: Vec<T>, b: Vec<T> },
    Relu,
    Pool { p: usize, input: Shape, output: Shape },
    Fc { input: usize, output: usize, w: Vec<T>, b: Vec<T> },
}

/// Values cached by a forward pass for backpropagation.
struct Trace<T> {
    /// Input of every layer, plus the final logits.
    acts: Vec<Vec<T>>,
    /// im2col matrix of each conv layer (empty for other layers).
    cols: Vec<Vec<T>>,
    /// Argmax positions of each pooling layer.
    argmax: Vec<Vec<usize>>,
}

/// A feed-forward network built from an [`Architecture`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub arch: Architecture,
    pub input: Shape,
    layers: Vec<Layer<T>>,
}

fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut s = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        s = s + *x * *y;
    }
    acc.iter().fold(s, |s, &x| s + x)
}

fn axpy<T: Float>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Patch matrix in position-major layout: row `p` holds the `c·k·k`
/// input values under output position `p` (zero outside the image).
fn im2col<T: Float>(x: &[T], s: Shape, k: usize, stride: usize, out: Shape, cols: &mut Vec<T>) {
    let pad = k / 2;
    let kk = s.c * k * k;
    cols.clear();
    cols.resize(out.h * out.w * kk, T::zero());
    for oy in 0..out.h {
        for ox in 0..out.w {
            let row = &mut cols[(oy * out.w + ox) * kk..][..kk];
            for ky in 0..k {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= s.h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= s.w as isize {
                        continue;
                    }
                    let src = iy as usize * s.w + ix as usize;
                    for c in 0..s.c {
                        row[(c * k + ky) * k + kx] = x[c * s.h * s.w + src];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back onto the input.
fn col2im<T: Float>(cols: &[T], s: Shape, k: usize, stride: usize, out: Shape, dx: &mut [T]) {
    let pad = k / 2;
    let kk = s.c * k * k;
    for oy in 0..out.h {
        for ox in 0..out.w {
            let row = &cols[(oy * out.w + ox) * kk..][..kk];
            for ky in 0..k {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= s.h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= s.w as isize {
                        continue;
                    }
                    let dst = iy as usize * s.w + ix as usize;
                    for c in 0..s.c {
                        let i = c * s.h * s.w + dst;
                        dx[i] = dx[i] + row[(c * k + ky) * k + kx];
                    }
                }
            }
        }
    }
}

/// Softmax of `logits` in `f64`.
pub fn softmax<T: Float>(logits: &[T]) -> Vec<f64> {
    let z: Vec<f64> = logits.iter().map(|x| x.to_f64().unwrap()).collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

impl<T: Float + Send + Sync> Network<T> {
    /// Builds the layer stack with all parameters zero.
    pub fn zeros(arch: &Architecture, input: Shape) -> Result<Self, ClassifierError> {
        let bad = |reason: String| ClassifierError::Architecture { spec: arch.to_string(), reason };
        let mut shape = input;
        let mut flat: Option<usize> = None;
        let mut layers = Vec::new();
        for spec in &arch.0 {
            match *spec {
                LayerSpec::Conv { k, out, stride } => {
                    if flat.is_some() {
                        return Err(bad("convolution after a fully-connected layer".into()));
                    }
                    let pad = k / 2;
                    let output = Shape {
                        c: out,
                        h: (shape.h + 2 * pad - k) / stride + 1,
                        w: (shape.w + 2 * pad - k) / stride + 1,
                    };
                    let n = out * shape.c * k * k;
                    layers.push(Layer::Conv { k, stride, input: shape, output, w: vec![T::zero(); n], b: vec![T::zero(); out] });
                    shape = output;
                }
                LayerSpec::Relu => layers.push(Layer::Relu),
                LayerSpec::MaxPool(p) => {
                    if flat.is_some() {
                        return Err(bad("pooling after a fully-connected layer".into()));
                    }
                    if shape.h < p || shape.w < p {
                        return Err(bad(format!("pool{p} on a {}×{} map", shape.h, shape.w)));
                    }
                    let output = Shape { c: shape.c, h: shape.h / p, w: shape.w / p };
                    layers.push(Layer::Pool { p, input: shape, output });
                    shape = output;
                }
                LayerSpec::Fc(n) => {
                    let inp = flat.unwrap_or(shape.len());
                    layers.push(Layer::Fc { input: inp, output: n, w: vec![T::zero(); n * inp], b: vec![T::zero(); n] });
                    flat = Some(n);
                }
            }
        }
        Ok(Self { arch: arch.clone(), input, layers })
    }

    /// Fan-in scaled uniform weights `U(−√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn init(arch: &Architecture, input: Shape, seed: u64) -> Result<Self, ClassifierError> {
        let mut net = Self::zeros(arch, input)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let (w, fan_in) = match layer {
                Layer::Conv { k, input, w, .. } => (w, input.c * *k * *k),
                Layer::Fc { input, w, .. } => (w, *input),
                _ => continue,
            };
            let a = (6.0 / fan_in as f64).sqrt();
            for x in w.iter_mut() {
                *x = T::from(rng.gen_range(-a..a)).unwrap();
            }
        }
        Ok(net)
    }

    pub fn output_width(&self) -> usize {
        self.arch.output_width().unwrap_or(0)
    }

    /// Parameter tensors in declared order (weights then bias per layer).
    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for l in &self.layers {
            if let Layer::Conv { w, b, .. } | Layer::Fc { w, b, .. } = l {
                out.push(w);
                out.push(b);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            if let Layer::Conv { w, b, .. } | Layer::Fc { w, b, .. } = l {
                out.push(w);
                out.push(b);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Converts every parameter to another float type.
    pub fn cast<U: Float + Send + Sync>(&self) -> Network<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::from(*x).unwrap()).collect::<Vec<U>>();
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv { k, stride, input, output, w, b } => {
                    Layer::Conv { k: *k, stride: *stride, input: *input, output: *output, w: c(w), b: c(b) }
                }
                Layer::Relu => Layer::Relu,
                Layer::Pool { p, input, output } => Layer::Pool { p: *p, input: *input, output: *output },
                Layer::Fc { input, output, w, b } => Layer::Fc { input: *input, output: *output, w: c(w), b: c(b) },
            })
            .collect();
        Network { arch: self.arch.clone(), input: self.input, layers }
    }

    fn run(&self, x: &[T], keep: bool) -> Trace<T> {
        let n = self.layers.len();
        let mut trace = Trace { acts: Vec::with_capacity(n + 1), cols: vec![Vec::new(); n], argmax: vec![Vec::new(); n] };
        let mut cur = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let next = match layer {
                Layer::Conv { k, stride, input, output, w, b } => {
                    let mut cols = Vec::new();
                    im2col(&cur, *input, *k, *stride, *output, &mut cols);
                    let p = output.h * output.w;
                    let kk = input.c * k * k;
                    let mut out = vec![T::zero(); output.len()];
                    for o in 0..output.c {
                        let wrow = &w[o * kk..(o + 1) * kk];
                        for q in 0..p {
                            out[o * p + q] = b[o] + dot(wrow, &cols[q * kk..(q + 1) * kk]);
                        }
                    }
                    if keep {
                        trace.cols[li] = cols;
                    }
                    out
                }
                Layer::Relu => cur.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
                Layer::Pool { p, input, output } => {
                    let mut out = vec![T::zero(); output.len()];
                    let mut arg = vec![0usize; output.len()];
                    for c in 0..output.c {
                        for oy in 0..output.h {
                            for ox in 0..output.w {
                                let mut best = T::neg_infinity();
                                let mut bi = 0;
                                for dy in 0..*p {
                                    for dx in 0..*p {
                                        let i = (c * input.h + oy * p + dy) * input.w + ox * p + dx;
                                        if cur[i] > best {
                                            best = cur[i];
                                            bi = i;
                                        }
                                    }
                                }
                                let o = (c * output.h + oy) * output.w + ox;
                                out[o] = best;
                                arg[o] = bi;
                            }
                        }
                    }
                    if keep {
                        trace.argmax[li] = arg;
                    }
                    out
                }
                Layer::Fc { input, output, w, b } => {
                    (0..*output).map(|o| b[o] + dot(&w[o * input..(o + 1) * input], &cur)).collect()
                }
            };
            if keep {
                trace.acts.push(std::mem::replace(&mut cur, next));
            } else {
                cur = next;
            }
        }
        trace.acts.push(cur);
        trace
    }

    /// Logits for one input.
    pub fn logits(&self, x: &[T]) -> Vec<T> {
        self.run(x, false).acts.pop().unwrap()
    }

    /// Softmax probabilities for one input.
    pub fn predict(&self, x: &[T]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Cross-entropy of one sample; accumulates `scale · ∂loss/∂θ` into `grads`
    /// (same layout as [`Network::params`]).
    /// Returns the loss and whether the prediction was correct.
    fn backprop(&self, x: &[T], label: usize, scale: T, grads: &mut [Vec<T>]) -> (f64, bool) {
        let trace = self.run(x, true);
        let logits = trace.acts.last().unwrap();
        let p = softmax(logits);
        let loss = -p[label].max(f64::MIN_POSITIVE).ln();
        let correct = argmax(&p) == label;
        let mut delta: Vec<T> = p
            .iter()
            .enumerate()
            .map(|(i, &pi)| T::from(pi - if i == label { 1.0 } else { 0.0 }).unwrap() * scale)
            .collect();
        let mut gi = grads.len();
        for li in (0..self.layers.len()).rev() {
            let inp = &trace.acts[li];
            let need_dx = li > 0;
            delta = match &self.layers[li] {
                Layer::Conv { k, stride, input, output, w, .. } => {
                    gi -= 2;
                    let (gw, gb) = grads[gi..gi + 2].split_at_mut(1);
                    let (gw, gb) = (&mut gw[0], &mut gb[0]);
                    let cols = &trace.cols[li];
                    let pp = output.h * output.w;
                    let kk = input.c * k * k;
                    let mut dcols = if need_dx { vec![T::zero(); kk * pp] } else { Vec::new() };
                    for o in 0..output.c {
                        let drow = &delta[o * pp..(o + 1) * pp];
                        gb[o] = gb[o] + drow.iter().fold(T::zero(), |s, &d| s + d);
                        let wrow = &w[o * kk..(o + 1) * kk];
                        let gwrow = &mut gw[o * kk..(o + 1) * kk];
                        for (q, &d) in drow.iter().enumerate() {
                            if d == T::zero() {
                                continue;
                            }
                            axpy(d, &cols[q * kk..(q + 1) * kk], gwrow);
                            if need_dx {
                                axpy(d, wrow, &mut dcols[q * kk..(q + 1) * kk]);
                            }
                        }
                    }
                    if need_dx {
                        let mut dx = vec![T::zero(); input.len()];
                        col2im(&dcols, *input, *k, *stride, *output, &mut dx);
                        dx
                    } else {
                        Vec::new()
                    }
                }
                Layer::Relu => delta.iter().zip(inp).map(|(&d, &a)| if a > T::zero() { d } else { T::zero() }).collect(),
                Layer::Pool { input, .. } => {
                    let mut dx = vec![T::zero(); input.len()];
                    for (o, &i) in trace.argmax[li].iter().enumerate() {
                        dx[i] = dx[i] + delta[o];
                    }
                    dx
                }
                Layer::Fc { input, output, w, .. } => {
                    gi -= 2;
                    let (gw, gb) = grads[gi..gi + 2].split_at_mut(1);
                    let (gw, gb) = (&mut gw[0], &mut gb[0]);
                    let mut dx = if need_dx { vec![T::zero(); *input] } else { Vec::new() };
                    for o in 0..*output {
                        let d = delta[o];
                        gb[o] = gb[o] + d;
                        axpy(d, inp, &mut gw[o * input..(o + 1) * input]);
                        if need_dx {
                            axpy(d, &w[o * input..(o + 1) * input], &mut dx);
                        }
                    }
                    dx
                }
            };
        }
        (loss, correct)
    }

    fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params().iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    /// Mean cross-entropy over `(input, label)` pairs and its gradient,
    /// accumulated in `f64` over fixed chunks of [`GRAD_CHUNK`] samples.
    pub fn batch_gradient(&self, batch: &[(&[T], usize)]) -> (f64, Vec<Vec<f64>>) {
        let (loss, grad, _) = self.batch_gradient_counted(batch);
        (loss, grad)
    }

    /// [`Network::batch_gradient`] plus the number of correct argmax predictions.
    pub fn batch_gradient_counted(&self, batch: &[(&[T], usize)]) -> (f64, Vec<Vec<f64>>, usize) {
        let scale = T::from(1.0 / batch.len() as f64).unwrap();
        let partials: Vec<(f64, Vec<Vec<f64>>, usize)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut acc: Vec<Vec<f64>> = self.params().iter().map(|p| vec![0.0; p.len()]).collect();
                let mut loss = 0.0;
                let mut correct = 0;
                let mut g = self.zero_grads();
                for &(x, label) in chunk {
                    g.iter_mut().for_each(|t| t.fill(T::zero()));
                    let (l, ok) = self.backprop(x, label, scale, &mut g);
                    loss += l;
                    correct += ok as usize;
                    for (a, t) in acc.iter_mut().zip(&g) {
                        for (ai, ti) in a.iter_mut().zip(t) {
                            *ai += ti.to_f64().unwrap();
                        }
                    }
                }
                (loss, acc, correct)
            })
            .collect();
        let mut total: Vec<Vec<f64>> = self.params().iter().map(|p| vec![0.0; p.len()]).collect();
        let mut loss = 0.0;
        let mut correct = 0;
        for (l, g, c) in partials {
            loss += l;
            correct += c;
            for (a, t) in total.iter_mut().zip(&g) {
                for (ai, ti) in a.iter_mut().zip(t) {
                    *ai += ti;
                }
            }
        }
        (loss / batch.len() as f64, total, correct)
    }

    /// Mean cross-entropy without gradients.
    pub fn batch_loss(&self, batch: &[(&[T], usize)]) -> f64 {
        batch.iter().map(|&(x, l)| -self.predict(x)[l].max(f64::MIN_POSITIVE).ln()).sum::<f64>() / batch.len() as f64
    }
}

/// Labeled grids addressable by id.
pub trait GridSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn channels(&self) -> usize;
    fn resolution(&self) -> usize;
    fn label(&self, id: usize) -> u8;
    fn grid(&self, id: usize) -> Result<Vec<f32>, ClassifierError>;
    /// Hash identifying the training data, stored in the model.
    fn manifest_hash(&self) -> String;
}

impl GridSource for Dataset {
    fn len(&self) -> usize {
        Dataset::len(self)
    }

    fn channels(&self) -> usize {
        self.manifest.channels
    }

    fn resolution(&self) -> usize {
        self.manifest.resolution
    }

    fn label(&self, id: usize) -> u8 {
        Dataset::label(self, id)
    }

    fn grid(&self, id: usize) -> Result<Vec<f32>, ClassifierError> {
        Ok(self.read(id)?.data)
    }

    fn manifest_hash(&self) -> String {
        self.manifest.hash()
    }
}

/// Grids held in memory.
#[derive(Debug, Clone)]
pub struct MemorySource {
    pub channels: usize,
    pub resolution: usize,
    pub grids: Vec<Vec<f32>>,
    pub labels: Vec<u8>,
}

impl GridSource for MemorySource {
    fn len(&self) -> usize {
        self.grids.len()
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn resolution(&self) -> usize {
        self.resolution
    }

    fn label(&self, id: usize) -> u8 {
        self.labels[id]
    }

    fn grid(&self, id: usize) -> Result<Vec<f32>, ClassifierError> {
        Ok(self.grids[id].clone())
    }

    fn manifest_hash(&self) -> String {
        let mut bytes = Vec::new();
        for (g, l) in self.grids.iter().zip(&self.labels) {
            bytes.push(*l);
            g.iter().for_each(|x| bytes.extend_from_slice(&x.to_le_bytes()));
        }
        sha256_hex(&bytes)
    }
}

/// A trained network plus the hashes tying it to its config and data.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config_hash: String,
    pub manifest_hash: String,
    /// Hash of the normalization stats the training data used (may be empty).
    pub stats_hash: String,
    pub net: Network<f32>,
}

impl Model {
    pub fn channels(&self) -> usize {
        self.net.input.c
    }

    pub fn resolution(&self) -> usize {
        self.net.input.h
    }

    fn check_shape(&self, len: usize) -> Result<(), ClassifierError> {
        if len != self.net.input.len() {
            let r2 = self.resolution() * self.resolution();
            return Err(ClassifierError::Shape {
                expected_channels: self.channels(),
                expected_resolution: self.resolution(),
                found_channels: len / r2.max(1),
                found_resolution: self.resolution(),
            });
        }
        Ok(())
    }

    /// Softmax over the labels for one grid.
    pub fn predict(&self, grid: &[f32]) -> Result<Vec<f64>, ClassifierError> {
        self.check_shape(grid.len())?;
        Ok(self.net.predict(grid))
    }

    /// Argmax labels of many grids, in parallel.
    pub fn predict_labels(&self, grids: &[Vec<f32>]) -> Result<Vec<u8>, ClassifierError> {
        grids
            .par_iter()
            .map(|g| {
                let p = self.predict(g)?;
                Ok(argmax(&p) as u8)
            })
            .collect()
    }

    /// Refuses models trained for a different input layout.
    pub fn expect_input(&self, channels: usize, resolution: usize) -> Result<(), ClassifierError> {
        if channels != self.channels() || resolution != self.resolution() {
            return Err(ClassifierError::Shape {
                expected_channels: self.channels(),
                expected_resolution: self.resolution(),
                found_channels: channels,
                found_resolution: resolution,
            });
        }
        Ok(())
    }

    fn header_text(&self) -> String {
        format!(
            "arch={}\nchannels={}\nresolution={}\nconfig_hash={}\nmanifest_hash={}\nstats_hash={}\n",
            self.net.arch,
            self.net.input.c,
            self.net.input.h,
            self.config_hash,
            self.manifest_hash,
            self.stats_hash
        )
    }

    /// `PGMD` | version | header length | header text | tensor count |
    /// (length, f32 LE values)* | SHA-256 of everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(PGMD_MAGIC);
        b.extend_from_slice(&PGMD_VERSION.to_le_bytes());
        let header = self.header_text();
        b.extend_from_slice(&(header.len() as u32).to_le_bytes());
        b.extend_from_slice(header.as_bytes());
        let params = self.net.params();
        b.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for t in params {
            b.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for x in t {
                b.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&b);
        b.extend_from_slice(digest.as_slice());
        b
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, ClassifierError> {
        let bad = |reason: &str| ClassifierError::ModelFile { path: path.to_path_buf(), reason: reason.to_string() };
        if bytes.len() < 12 + 32 {
            return Err(bad("truncated model file"));
        }
        if &bytes[0..4] != PGMD_MAGIC {
            return Err(bad("bad magic (not a PGMD file)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != PGMD_VERSION {
            return Err(bad(&format!("unsupported model version {version}")));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch (truncated or corrupted model file)"));
        }
        let mut pos = 8;
        let mut take = |n: usize| -> Result<&[u8], ClassifierError> {
            let s = body.get(pos..pos + n).ok_or_else(|| bad("truncated model file"))?;
            pos += n;
            Ok(s)
        };
        let hlen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let header = std::str::from_utf8(take(hlen)?).map_err(|_| bad("header is not UTF-8"))?.to_string();
        let field = |k: &str| {
            header
                .lines()
                .find_map(|l| l.strip_prefix(k).and_then(|r| r.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| bad(&format!("header lacks '{k}'")))
        };
        let arch: Architecture = field("arch")?.parse()?;
        let channels: usize = field("channels")?.parse().map_err(|_| bad("bad channel count"))?;
        let resolution: usize = field("resolution")?.parse().map_err(|_| bad("bad resolution"))?;
        let mut net = Network::<f32>::zeros(&arch, Shape { c: channels, h: resolution, w: resolution })?;
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut slots = net.params_mut();
        if count != slots.len() {
            return Err(bad(&format!("expected {} tensors, found {count}", slots.len())));
        }
        for slot in slots.iter_mut() {
            let len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
            if len != slot.len() {
                return Err(bad(&format!("tensor length {len} does not match the architecture ({})", slot.len())));
            }
            let raw = take(4 * len)?;
            for (x, c) in slot.iter_mut().zip(raw.chunks_exact(4)) {
                *x = f32::from_le_bytes(c.try_into().unwrap());
            }
        }
        if pos != body.len() {
            return Err(bad("trailing bytes after the last tensor"));
        }
        if slots.iter().any(|t| t.iter().any(|x| !x.is_finite())) {
            return Err(bad("non-finite parameter"));
        }
        let model = Model {
            config_hash: field("config_hash")?,
            manifest_hash: field("manifest_hash")?,
            stats_hash: field("stats_hash")?,
            net,
        };
        Ok(model)
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ClassifierError> {
    let io = |source| ClassifierError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(&model.to_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

/// Loads a model, verifying magic, version, checksum and that the stored
/// config hash matches `expected_config_hash` when given.
pub fn load_model(path: &Path, expected_config_hash: Option<&str>) -> Result<Model, ClassifierError> {
    let bytes = std::fs::read(path).map_err(|source| ClassifierError::Io { path: path.to_path_buf(), source })?;
    let model = Model::from_bytes(&bytes, path)?;
    if let Some(h) = expected_config_hash {
        if h != model.config_hash {
            return Err(ClassifierError::ModelFile {
                path: path.to_path_buf(),
                reason: format!("config hash mismatch: model {}, expected {h}", model.config_hash),
            });
        }
    }
    Ok(model)
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub lr: Vec<f64>,
    pub seconds: Vec<f64>,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.loss.len()
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.accuracy.last().copied()
    }

    /// Text table; wall times are excluded so reports are reproducible.
    pub fn to_text(&self) -> String {
        let mut s = String::from("epoch\tlr\tloss\taccuracy\n");
        for e in 0..self.epochs() {
            s.push_str(&format!("{e}\t{:.6e}\t{:.6}\t{:.4}\n", self.lr[e], self.loss[e], self.accuracy[e]));
        }
        s
    }
}

/// Config hash covering the training settings and the input shape.
pub fn config_hash(cfg: &ClassifierConfig, channels: usize, resolution: usize) -> String {
    sha256_hex(format!("{}channels={channels}\nresolution={resolution}\n", cfg.to_text()).as_bytes())
}

/// SGD with momentum on mean cross-entropy over balanced epochs.
/// `checkpoint` receives the model every `cfg.checkpoint_every` epochs.
pub fn train(
    data: &dyn GridSource,
    cfg: &ClassifierConfig,
    stats_hash: &str,
    mut checkpoint: impl FnMut(usize, &Model) -> Result<(), ClassifierError>,
) -> Result<(Model, TrainReport), ClassifierError> {
    cfg.validate()?;
    let (channels, res) = (data.channels(), data.resolution());
    let input = Shape { c: channels, h: res, w: res };
    let mut net = Network::<f32>::init(&cfg.arch, input, cfg.seed)?;
    let labels: Vec<u8> = (0..data.len()).map(|i| data.label(i)).collect();
    let mut velocity: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut report = TrainReport::default();
    let mut model = Model {
        config_hash: config_hash(cfg, channels, res),
        manifest_hash: data.manifest_hash(),
        stats_hash: stats_hash.to_string(),
        net: net.clone(),
    };
    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let lr = cfg.lr.rate(epoch, cfg.epochs);
        let ids = balanced_epoch_sampler(&labels, cfg.per_label, cfg.seed, epoch as u64)?;
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (bi, batch_ids) in ids.chunks(cfg.batch_size).enumerate() {
            let grids: Vec<Vec<f32>> = batch_ids.iter().map(|&id| data.grid(id)).collect::<Result<_, _>>()?;
            for g in &grids {
                if g.len() != input.len() {
                    return Err(ClassifierError::Shape {
                        expected_channels: channels,
                        expected_resolution: res,
                        found_channels: g.len() / (res * res),
                        found_resolution: res,
                    });
                }
            }
            let batch: Vec<(&[f32], usize)> =
                grids.iter().zip(batch_ids).map(|(g, &id)| (g.as_slice(), labels[id] as usize)).collect();
            let (loss, grad, ok) = net.batch_gradient_counted(&batch);
            correct += ok;
            if !loss.is_finite() {
                return Err(ClassifierError::NonFinite { epoch, batch: bi });
            }
            loss_sum += loss * batch.len() as f64;
            for ((p, v), g) in net.params_mut().into_iter().zip(velocity.iter_mut()).zip(&grad) {
                for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = cfg.momentum * *vi - lr * gi;
                    *pi = (*pi as f64 + *vi) as f32;
                }
            }
        }
        report.loss.push(loss_sum / ids.len() as f64);
        report.accuracy.push(correct as f64 / ids.len() as f64);
        report.lr.push(lr);
        report.seconds.push(t0.elapsed().as_secs_f64());
        log::info!(
            "train epoch {epoch}: lr {lr:.3e} loss {:.5} acc {:.4} ({:.1}s)",
            report.loss[epoch],
            report.accuracy[epoch],
            report.seconds[epoch]
        );
        model.net = net.clone();
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            checkpoint(epoch, &model)?;
        }
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> (Network<f64>, Vec<f64>) {
        let arch: Architecture = "conv3x3:2,relu,pool2,fc:3".parse().unwrap();
        let net = Network::<f64>::init(&arch, Shape { c: 2, h: 4, w: 4 }, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (net, x)
    }

    #[test]
    fn architecture_round_trips() {
        let a = Architecture::reference();
        assert_eq!(a.to_string().parse::<Architecture>().unwrap(), a);
        assert_eq!(a.output_width(), Some(8));
        let v = Architecture::vgg16();
        assert_eq!(v.0.iter().filter(|l| matches!(l, LayerSpec::Conv { .. })).count(), 13);
        assert_eq!(v.0.iter().filter(|l| matches!(l, LayerSpec::Fc(_))).count(), 3);
        assert!("conv3x3:16,relu".parse::<Architecture>().is_err());
        assert!("conv3x2:16,fc:8".parse::<Architecture>().is_err());
        let s: Architecture = "conv5x5:4/s2,fc:8".parse().unwrap();
        assert_eq!(s.0[0], LayerSpec::Conv { k: 5, out: 4, stride: 2 });
        assert_eq!(s.to_string(), "conv5x5:4/s2,fc:8");
        let n = Network::<f32>::zeros(&Architecture::vgg16(), Shape { c: 32, h: 32, w: 32 }).unwrap();
        assert!(n.param_count() > 30_000_000);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (net, x) = micro();
        let (_, g) = net.batch_gradient(&[(&x, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let flat_len: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        for _ in 0..10 {
            let t = rng.gen_range(0..flat_len.len());
            let i = rng.gen_range(0..flat_len[t]);
            let h = 1e-6;
            let eval = |d: f64| {
                let mut n = net.clone();
                n.params_mut()[t][i] += d;
                n.batch_loss(&[(&x, 1)])
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (fd - g[t][i]).abs() / fd.abs().max(g[t][i].abs()).max(1e-8);
            assert!(rel < 1e-4 || (fd - g[t][i]).abs() < 1e-9, "tensor {t}[{i}]: fd {fd} analytic {}", g[t][i]);
        }
    }

    #[test]
    fn batch_gradient_is_order_independent() {
        let (net, _) = micro();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<Vec<f64>> = (0..20).map(|_| (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 3)).collect();
        let mut rev = batch.clone();
        rev.reverse();
        let (la, ga) = net.batch_gradient(&batch);
        let (lb, gb) = net.batch_gradient(&rev);
        assert!((la - lb).abs() < 1e-12);
        for (a, b) in ga.iter().flatten().zip(gb.iter().flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_model_is_uniform_and_softmax_normalized() {
        let net = Network::<f32>::zeros(&Architecture::reference(), Shape { c: 3, h: 8, w: 8 }).unwrap();
        let x: Vec<f32> = (0..192).map(|i| (i as f32).sin()).collect();
        let p = net.predict(&x);
        assert!(p.iter().all(|&q| (q - 0.125).abs() < 1e-12));
        let net = Network::<f32>::init(&Architecture::reference(), Shape { c: 3, h: 8, w: 8 }, 1).unwrap();
        let p = net.predict(&x);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6 && p.iter().all(|&q| q >= 0.0));
    }

    #[test]
    fn lr_schedule_endpoints() {
        let s = LrSchedule::LogUniform { start: 1e-3, end: 1e-9 };
        assert_eq!(s.rate(0, 200), 1e-3);
        assert!((s.rate(199, 200) / 1e-9 - 1.0).abs() < 1e-12);
        assert!((s.rate(1, 3) - 1e-6).abs() < 1e-18);
        let st = LrSchedule::Step { start: 1e-2, end: 1e-4, every: 2, factor: 0.1 };
        assert_eq!(st.rate(0, 10), 1e-2);
        assert!((st.rate(2, 10) - 1e-3).abs() < 1e-15);
        assert_eq!(st.rate(9, 10), 1e-4);
        assert_eq!(s.to_string().parse::<LrSchedule>().unwrap(), s);
        assert_eq!(st.to_string().parse::<LrSchedule>().unwrap(), st);
        let bad = ClassifierConfig { lr: LrSchedule::LogUniform { start: 1e-9, end: 1e-3 }, ..Default::default() };
        assert!(matches!(bad.validate(), Err(ClassifierError::Config(_))));
    }

    #[test]
    fn model_bytes_round_trip_and_reject_damage() {
        let net = Network::<f32>::init(&"conv3x3:4,relu,pool2,fc:8".parse().unwrap(), Shape { c: 2, h: 4, w: 4 }, 9).unwrap();
        let model = Model { config_hash: "c".into(), manifest_hash: "m".into(), stats_hash: "s".into(), net };
        let bytes = model.to_bytes();
        let p = Path::new("mem");
        assert_eq!(Model::from_bytes(&bytes, p).unwrap(), model);
        assert!(Model::from_bytes(&bytes[..bytes.len() - 5], p).is_err());
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(Model::from_bytes(&flipped, p).unwrap_err().to_string().contains("checksum"));
        assert!(matches!(model.predict(&[0.0; 5]), Err(ClassifierError::Shape { .. })));
    }
}
