//! Change-detection statistics and sliding-window detection maps.
//!
//! Every statistic is a cost difference: the H0 cost of the stack at the
//! shared estimate minus the sum of the per-frame minimized costs. The
//! unstructured detectors run the Kronecker code path with `b = 1`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{kron_existence, kron_mle, min_frame_cost, FixedPointConfig};
use crate::linalg::{CMatrix, C64};
use crate::model::{nll_h0_stack, ModelDims, Patch};
use crate::online::{run_stream, SgdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Sg,
    Ksg,
    SgOnline,
    KsgOnline,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [Self::Sg, Self::Ksg, Self::SgOnline, Self::KsgOnline];

    pub fn is_online(self) -> bool {
        matches!(self, Self::SgOnline | Self::KsgOnline)
    }

    pub fn is_structured(self) -> bool {
        matches!(self, Self::Ksg | Self::KsgOnline)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sg => "sg",
            Self::Ksg => "ksg",
            Self::SgOnline => "sg-online",
            Self::KsgOnline => "ksg-online",
        }
    }

    /// Dims actually used by this detector: `dims` itself for the Kronecker
    /// kinds, `(p, 1, n)` for the unstructured ones.
    pub fn effective_dims(self, dims: ModelDims) -> ModelDims {
        if self.is_structured() {
            dims
        } else {
            ModelDims::unstructured(dims.p(), dims.n()).expect("dims are positive")
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown detector '{s}' (expected sg, ksg, sg-online or ksg-online)")))
    }
}

/// Estimator settings shared by all detectors. The default allows 10000
/// sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub fixed_point: FixedPointConfig,
    pub sgd: SgdConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            fixed_point: FixedPointConfig {
                tol: 1e-9,
                max_iter: 10_000,
            },
            sgd: SgdConfig::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.fixed_point.validate()?;
        self.sgd.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub log_glrt: f64,
    pub threshold: Option<f64>,
    pub decision: Option<bool>,
}

impl DetectionResult {
    pub fn new(log_glrt: f64) -> Self {
        Self {
            log_glrt,
            threshold: None,
            decision: None,
        }
    }

    pub fn with_threshold(self, threshold: f64) -> Self {
        Self {
            log_glrt: self.log_glrt,
            threshold: Some(threshold),
            decision: Some(self.log_glrt > threshold),
        }
    }
}

/// Offline GLRT on a stack of `T >= 2` patches.
pub fn glrt_offline(patches: &[Patch], kind: DetectorKind, dims: ModelDims, cfg: &DetectorConfig) -> Result<DetectionResult> {
    if kind.is_online() {
        return Err(Error::InvalidConfig(format!("{kind} is not an offline detector")));
    }
    if patches.len() < 2 {
        return Err(Error::TooFewFrames {
            required: 2,
            got: patches.len(),
        });
    }
    let dims = kind.effective_dims(dims);
    let patches = patches.iter().map(|p| p.with_dims(dims)).collect::<Result<Vec<_>>>()?;
    let pooled = kron_mle(&patches, dims, &cfg.fixed_point)?;
    let h0 = nll_h0_stack(&patches, &pooled.theta)?;
    let mut h1 = 0.0;
    for patch in &patches {
        h1 += min_frame_cost(patch, dims, &cfg.fixed_point)?;
    }
    Ok(DetectionResult::new(h0 - h1))
}

/// Online GLRT: the running statistic after each frame of the stream.
pub fn glrt_online(patches: &[Patch], kind: DetectorKind, dims: ModelDims, cfg: &DetectorConfig) -> Result<Vec<DetectionResult>> {
    if !kind.is_online() {
        return Err(Error::InvalidConfig(format!("{kind} is not an online detector")));
    }
    let dims = kind.effective_dims(dims);
    let (_, scores) = run_stream(patches, dims, &cfg.sgd, &cfg.fixed_point)?;
    Ok(scores.into_iter().map(DetectionResult::new).collect())
}

/// Final statistic of any detector kind over the whole stack.
pub fn glrt_score(patches: &[Patch], kind: DetectorKind, dims: ModelDims, cfg: &DetectorConfig) -> Result<f64> {
    if kind.is_online() {
        Ok(glrt_online(patches, kind, dims, cfg)?
            .last()
            .expect("nonempty stream")
            .log_glrt)
    } else {
        Ok(glrt_offline(patches, kind, dims, cfg)?.log_glrt)
    }
}

/// Multichannel image time series indexed `[t][row][col][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    voxels: Vec<C64>,
}

impl ImageStack {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize, voxels: Vec<C64>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidDims(format!(
                "image stack dims T={frames}, height={height}, width={width}, p={channels} must be positive"
            )));
        }
        let expected = frames * height * width * channels;
        if voxels.len() != expected {
            return Err(Error::dims(format!("expected {expected} voxels, got {}", voxels.len())));
        }
        if voxels.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("image stack"));
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            voxels,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn voxels(&self) -> &[C64] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<C64> {
        self.voxels
    }

    /// The `p` channels of pixel `(row, col)` at frame `t`.
    pub fn pixel(&self, t: usize, row: usize, col: usize) -> &[C64] {
        let start = ((t * self.height + row) * self.width + col) * self.channels;
        &self.voxels[start..start + self.channels]
    }

    /// One patch per frame made of the `window²` pixels whose top-left
    /// corner is `(row, col)`, in row-major order.
    pub fn window_patches(&self, row: usize, col: usize, window: usize, dims: ModelDims) -> Result<Vec<Patch>> {
        if dims.p() != self.channels || dims.n() != window * window {
            return Err(Error::dims(format!(
                "dims {dims:?} do not fit a {window}x{window} window of {} channels",
                self.channels
            )));
        }
        (0..self.frames)
            .map(|t| {
                let mut data = Vec::with_capacity(dims.p() * dims.n());
                for r in row..row + window {
                    for c in col..col + window {
                        data.extend_from_slice(self.pixel(t, r, c));
                    }
                }
                Patch::new(dims, CMatrix::from_vec(dims.p(), dims.n(), data))
            })
            .collect()
    }
}

/// Row-major map of statistics; failed windows hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl DetectionMap {
    pub fn nan_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// Statistic of every `window x window` neighbourhood that fits inside the
/// image. Entry `(r, c)` is centered on pixel `(r + window/2, c + window/2)`.
/// Runs on the current rayon pool.
pub fn detection_map(
    stack: &ImageStack,
    window: usize,
    kind: DetectorKind,
    dims: ModelDims,
    cfg: &DetectorConfig,
) -> Result<DetectionMap> {
    cfg.validate()?;
    if window == 0 || window % 2 == 0 || window > stack.height.min(stack.width) {
        return Err(Error::WindowTooLarge {
            window,
            height: stack.height,
            width: stack.width,
        });
    }
    if dims.p() != stack.channels {
        return Err(Error::dims(format!("a*b = {} but the stack has p = {}", dims.p(), stack.channels)));
    }
    let dims = dims.with_n(window * window)?;
    if !kind.is_online() && stack.frames < 2 {
        return Err(Error::TooFewFrames {
            required: 2,
            got: stack.frames,
        });
    }
    kron_existence(kind.effective_dims(dims), 1)?;

    let rows = stack.height - window + 1;
    let cols = stack.width - window + 1;
    let values: Vec<f64> = (0..rows * cols)
        .into_par_iter()
        .map(|k| {
            stack
                .window_patches(k / cols, k % cols, window, dims)
                .and_then(|patches| glrt_score(&patches, kind, dims, cfg))
                .unwrap_or(f64::NAN)
        })
        .collect();
    Ok(DetectionMap { rows, cols, values })
}
