//! JSON request and response bodies shared by the HTTP service and its
//! clients. Bulk numeric payloads travel as base64 little-endian bytes.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::detectors::{DetectionMap, DetectorConfig, DetectorKind, ImageStack};
use crate::estimators::{FixedPointConfig, KronEstimate};
use crate::geometry::IcrbReport;
use crate::io::{decode_stack, encode_stack, MitsHeader};
use crate::linalg::{CMatrix, C64};
use crate::model::{ModelDims, Patch, ThetaKron};
use crate::online::SgdConfig;
use crate::simlab::{MseBenchConfig, MseReport, RocReport, RocScenario, StackSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireStack {
    pub header: MitsHeader,
    /// MITS payload, base64
    pub payload: String,
}

impl WireStack {
    pub fn from_stack(stack: &ImageStack) -> Self {
        Self {
            header: MitsHeader::for_stack(stack),
            payload: STANDARD.encode(encode_stack(stack)),
        }
    }

    pub fn to_stack(&self) -> Result<ImageStack> {
        let bytes = STANDARD
            .decode(&self.payload)
            .map_err(|e| Error::MalformedHeader(format!("stack payload is not base64: {e}")))?;
        decode_stack(&self.header, &bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMap {
    pub rows: usize,
    pub cols: usize,
    pub nan_count: usize,
    /// Row-major `f64` little-endian values, base64
    pub payload: String,
}

impl WireMap {
    pub fn from_map(map: &DetectionMap) -> Self {
        let bytes: Vec<u8> = map.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            rows: map.rows,
            cols: map.cols,
            nan_count: map.nan_count(),
            payload: STANDARD.encode(bytes),
        }
    }

    pub fn to_map(&self) -> Result<DetectionMap> {
        let bytes = STANDARD
            .decode(&self.payload)
            .map_err(|e| Error::MalformedHeader(format!("map payload is not base64: {e}")))?;
        let expected = 8 * (self.rows * self.cols) as u64;
        if bytes.len() as u64 != expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: bytes.len() as u64,
            });
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(DetectionMap {
            rows: self.rows,
            cols: self.cols,
            values,
        })
    }
}

/// `n` samples of length `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePatch {
    pub samples: Vec<Vec<C64>>,
}

impl WirePatch {
    pub fn from_patch(patch: &Patch) -> Self {
        Self {
            samples: patch.samples().map(<[C64]>::to_vec).collect(),
        }
    }

    pub fn to_patch(&self, a: usize, b: usize) -> Result<Patch> {
        Patch::from_samples(ModelDims::new(a, b, self.samples.len())?, &self.samples)
    }
}

pub fn patches_from_wire(patches: &[WirePatch], a: usize, b: usize) -> Result<Vec<Patch>> {
    patches.iter().map(|p| p.to_patch(a, b)).collect()
}

/// Square matrix as a list of rows.
pub fn matrix_rows(m: &CMatrix) -> Vec<Vec<C64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTheta {
    pub a_factor: Vec<Vec<C64>>,
    pub b_factor: Vec<Vec<C64>>,
    pub textures: Vec<f64>,
}

impl WireTheta {
    pub fn from_theta(theta: &ThetaKron) -> Self {
        Self {
            a_factor: matrix_rows(theta.a_factor().as_matrix()),
            b_factor: matrix_rows(theta.b_factor().as_matrix()),
            textures: theta.textures().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
    NotFound,
    Internal,
}

impl ErrorKind {
    pub fn of(err: &Error) -> Self {
        match err {
            Error::InvalidConfig(_)
            | Error::InvalidCoefficient { .. }
            | Error::WindowTooLarge { .. }
            | Error::InsufficientSamples(_)
            | Error::TooFewFrames { .. }
            | Error::InvalidDims(_)
            | Error::DimensionMismatch(_) => ErrorKind::Config,
            Error::NotPositiveDefinite { .. } | Error::NotConverged { .. } => ErrorKind::Numerical,
            Error::NonFinite(what) if !matches!(*what, "patch samples" | "image stack") => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: ErrorKind,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(err: &Error) -> Self {
        Self {
            kind: ErrorKind::of(err),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcrbRequest {
    pub a: usize,
    pub b: usize,
    pub n: usize,
    #[serde(rename = "T")]
    pub frames: usize,
}

pub type IcrbResponse = IcrbReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRequest {
    pub a: usize,
    pub b: usize,
    /// One patch per frame; more than one pools the frames under shared textures
    pub patches: Vec<WirePatch>,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResponse {
    pub theta: WireTheta,
    pub iterations: usize,
    pub residual: f64,
}

impl From<&KronEstimate> for EstimateResponse {
    fn from(est: &KronEstimate) -> Self {
        Self {
            theta: WireTheta::from_theta(&est.theta),
            iterations: est.iterations,
            residual: est.residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlrtRequest {
    pub detector: DetectorKind,
    pub a: usize,
    pub b: usize,
    pub patches: Vec<WirePatch>,
    #[serde(default)]
    pub config: DetectorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlrtResponse {
    pub log_glrt: f64,
    /// Running statistic after every frame, online detectors only
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub stack: WireStack,
    pub detector: DetectorKind,
    pub a: usize,
    pub b: usize,
    pub window: usize,
    #[serde(default)]
    pub config: DetectorConfig,
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub map: WireMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseBenchRequest {
    pub config: MseBenchConfig,
    #[serde(default)]
    pub threads: Option<usize>,
}

pub type MseBenchResponse = MseReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocBenchRequest {
    pub scenario: RocScenario,
    #[serde(default)]
    pub threads: Option<usize>,
}

pub type RocBenchResponse = RocReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenStackRequest {
    pub spec: StackSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenStackResponse {
    pub stack: WireStack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    /// `sg-online` or `ksg-online`
    pub detector: DetectorKind,
    pub a: usize,
    pub b: usize,
    pub n: usize,
    #[serde(default)]
    pub sgd: SgdConfig,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushFrameRequest {
    pub patch: WirePatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub detector: DetectorKind,
    pub a: usize,
    pub b: usize,
    pub n: usize,
    pub frames_seen: usize,
    pub log_glrt: f64,
    /// Current streaming estimate; absent before the first frame
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<WireTheta>,
}
