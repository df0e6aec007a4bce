//! On-disk formats for image stacks and detection maps.
//!
//! A stack `<name>` is stored as `<name>.json` (header) next to `<name>.bin`
//! (interleaved real/imaginary `f32` little-endian pairs in
//! `[t][row][col][channel]` order). A map is stored the same way with an
//! `f64` row-major payload.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::detectors::{DetectionMap, ImageStack};
use crate::{Error, Result};

pub const STACK_DTYPE: &str = "c64";
pub const STACK_LAYOUT: &str = "t-row-col-chan";
pub const MAP_DTYPE: &str = "f64";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitsHeader {
    #[serde(rename = "T")]
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub p: usize,
    pub dtype: String,
    pub layout: String,
}

impl MitsHeader {
    pub fn for_stack(stack: &ImageStack) -> Self {
        Self {
            frames: stack.frames(),
            height: stack.height(),
            width: stack.width(),
            p: stack.channels(),
            dtype: STACK_DTYPE.to_string(),
            layout: STACK_LAYOUT.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dtype != STACK_DTYPE {
            return Err(Error::MalformedHeader(format!("unsupported dtype {:?}", self.dtype)));
        }
        if self.layout != STACK_LAYOUT {
            return Err(Error::MalformedHeader(format!("unsupported layout {:?}", self.layout)));
        }
        if self.frames == 0 || self.height == 0 || self.width == 0 || self.p == 0 {
            return Err(Error::MalformedHeader(format!(
                "dims must be positive, got T={} height={} width={} p={}",
                self.frames, self.height, self.width, self.p
            )));
        }
        Ok(())
    }

    /// Exact payload length in bytes.
    pub fn payload_bytes(&self) -> u64 {
        8 * self.frames as u64 * self.height as u64 * self.width as u64 * self.p as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapHeader {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub nan_count: usize,
}

/// `(header, payload)` paths for a base path, with or without extension.
pub fn sidecar_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("bin"))
}

pub fn encode_stack(stack: &ImageStack) -> Vec<u8> {
    let mut out = Vec::with_capacity(stack.voxels().len() * 8);
    for z in stack.voxels() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_stack(header: &MitsHeader, payload: &[u8]) -> Result<ImageStack> {
    header.validate()?;
    let expected = header.payload_bytes();
    if payload.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: payload.len() as u64,
        });
    }
    let voxels = payload
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex::new(re as f64, im as f64)
        })
        .collect();
    ImageStack::new(header.frames, header.height, header.width, header.p, voxels)
}

/// Writes `<path>.json` and `<path>.bin`. Values are narrowed to `f32`.
pub fn save_mits(stack: &ImageStack, path: &Path) -> Result<()> {
    let (header_path, payload_path) = sidecar_paths(path);
    fs::write(&header_path, serde_json::to_vec_pretty(&MitsHeader::for_stack(stack))?)?;
    fs::write(&payload_path, encode_stack(stack))?;
    Ok(())
}

pub fn load_mits(path: &Path) -> Result<ImageStack> {
    let (header_path, payload_path) = sidecar_paths(path);
    let header: MitsHeader = serde_json::from_slice(&fs::read(&header_path)?)
        .map_err(|e| Error::MalformedHeader(format!("{}: {e}", header_path.display())))?;
    header.validate()?;
    let actual = fs::metadata(&payload_path)?.len();
    if actual != header.payload_bytes() {
        return Err(Error::SizeMismatch {
            expected: header.payload_bytes(),
            actual,
        });
    }
    decode_stack(&header, &fs::read(&payload_path)?)
}

pub fn save_map(map: &DetectionMap, path: &Path) -> Result<()> {
    if map.rows == 0 || map.cols == 0 {
        return Err(Error::InvalidDims(format!("cannot save a {}x{} map", map.rows, map.cols)));
    }
    if map.values.len() != map.rows * map.cols {
        return Err(Error::InvalidDims(format!(
            "{}x{} map holds {} values",
            map.rows,
            map.cols,
            map.values.len()
        )));
    }
    let header = MapHeader {
        rows: map.rows,
        cols: map.cols,
        dtype: MAP_DTYPE.to_string(),
        nan_count: map.nan_count(),
    };
    let (header_path, payload_path) = sidecar_paths(path);
    let payload: Vec<u8> = map.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&header_path, serde_json::to_vec_pretty(&header)?)?;
    fs::write(&payload_path, payload)?;
    Ok(())
}

pub fn load_map(path: &Path) -> Result<DetectionMap> {
    let (header_path, payload_path) = sidecar_paths(path);
    let header: MapHeader = serde_json::from_slice(&fs::read(&header_path)?)
        .map_err(|e| Error::MalformedHeader(format!("{}: {e}", header_path.display())))?;
    if header.dtype != MAP_DTYPE {
        return Err(Error::MalformedHeader(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.rows == 0 || header.cols == 0 {
        return Err(Error::InvalidDims(format!("{}x{} map", header.rows, header.cols)));
    }
    let payload = fs::read(&payload_path)?;
    let expected = 8 * (header.rows * header.cols) as u64;
    if payload.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: payload.len() as u64,
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(DetectionMap {
        rows: header.rows,
        cols: header.cols,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(frames: usize, height: usize, width: usize, p: usize) -> MitsHeader {
        MitsHeader {
            frames,
            height,
            width,
            p,
            dtype: STACK_DTYPE.into(),
            layout: STACK_LAYOUT.into(),
        }
    }

    #[test]
    fn full_scene_payload_size() {
        assert_eq!(header(68, 200, 200, 12).payload_bytes(), 8 * 68 * 200 * 200 * 12);
    }

    #[test]
    fn bad_tags_are_rejected() {
        let mut h = header(2, 3, 3, 2);
        h.dtype = "c128".into();
        assert!(matches!(h.validate(), Err(Error::MalformedHeader(_))));
        let mut h = header(2, 3, 3, 2);
        h.layout = "t-chan-row-col".into();
        assert!(matches!(h.validate(), Err(Error::MalformedHeader(_))));
        assert!(matches!(header(0, 3, 3, 2).validate(), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn decode_checks_length() {
        let err = decode_stack(&header(1, 1, 1, 2), &[0u8; 15]).unwrap_err();
        assert!(matches!(err, Error::SizeMismatch { expected: 16, actual: 15 }));
    }
}
