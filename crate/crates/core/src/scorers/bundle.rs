//! `NFSW1` weight bundles.
//!
//! Layout:
//!
//! ```text
//! "NFSW1"             5 bytes
//! version             u8 (= 1)
//! metadata length     u32 little-endian
//! metadata            UTF-8 JSON, see BundleMetadata
//! tensor payloads     f32 little-endian, row-major, in metadata order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::code::PolarCode;
use crate::error::ScorerError;

pub const BUNDLE_MAGIC: &[u8; 5] = b"NFSW1";
pub const BUNDLE_VERSION: u8 = 1;
/// Step `i` of the recurrent pass sees `[grad_1[i], .., grad_L[i], r[i]]`.
pub const INPUT_LAYOUT: &str = "bitwise-interleaved-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// One logit per bit position, from the per-step hidden state.
    Flip,
    /// Two logits (continue, re-select) from the final hidden state.
    Validate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub architecture: String,
    pub head: HeadKind,
    pub input_layout: String,
    /// Code length `N`.
    pub n: usize,
    pub list_size: usize,
    /// Features per step, `L + 1`.
    pub input_size: usize,
    pub hidden: usize,
    /// Logits per step (flip head) or per state (validate head).
    pub output: usize,
    /// Hex SHA-256 of the target code, see `PolarCode::digest`.
    pub code_digest: String,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub info: TensorInfo,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub metadata: BundleMetadata,
    pub tensors: Vec<Tensor>,
}

fn malformed(msg: impl Into<String>) -> ScorerError {
    ScorerError::Model(msg.into())
}

impl ModelBundle {
    /// Checks that the metadata and the tensors agree; rejects non-finite values.
    pub fn new(metadata: BundleMetadata, tensors: Vec<Tensor>) -> Result<Self, ScorerError> {
        if metadata.tensors.len() != tensors.len() {
            return Err(malformed("tensor table does not match payloads"));
        }
        for (info, t) in metadata.tensors.iter().zip(&tensors) {
            if *info != t.info {
                return Err(malformed(format!(
                    "tensor {} does not match its table entry",
                    info.name
                )));
            }
            if t.data.len() != info.numel() {
                return Err(malformed(format!(
                    "tensor {} has shape {:?} but {} values",
                    info.name,
                    info.shape,
                    t.data.len()
                )));
            }
            if let Some(i) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(malformed(format!(
                    "tensor {} has a non-finite value at {i}",
                    info.name
                )));
            }
        }
        Ok(Self { metadata, tensors })
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.info.name == name)
    }

    /// Rejects bundles built for another code or list size.
    pub fn check_target(&self, code: &PolarCode, list_size: usize) -> Result<(), ScorerError> {
        let m = &self.metadata;
        if m.n != code.n_bits() || m.list_size != list_size || m.input_size != list_size + 1 {
            return Err(malformed(format!(
                "bundle expects N={} L={} (input {}), decoder has N={} L={list_size}",
                m.n,
                m.list_size,
                m.input_size,
                code.n_bits()
            )));
        }
        if m.code_digest != code.digest_hex() {
            return Err(malformed(
                "bundle was built for a different code (digest mismatch)",
            ));
        }
        if m.input_layout != INPUT_LAYOUT {
            return Err(malformed(format!(
                "unsupported input layout {:?}",
                m.input_layout
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.metadata).expect("metadata serializes");
        let payload: usize = self.tensors.iter().map(|t| t.data.len() * 4).sum();
        let mut out = Vec::with_capacity(10 + meta.len() + payload);
        out.extend_from_slice(BUNDLE_MAGIC);
        out.push(BUNDLE_VERSION);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ScorerError> {
        if bytes.len() < 10 || &bytes[..5] != BUNDLE_MAGIC {
            return Err(malformed("not an NFSW1 bundle"));
        }
        if bytes[5] != BUNDLE_VERSION {
            return Err(malformed(format!(
                "unsupported bundle version {}",
                bytes[5]
            )));
        }
        let meta_len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
        let meta_end = 10usize
            .checked_add(meta_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| malformed("truncated metadata"))?;
        let metadata: BundleMetadata = serde_json::from_slice(&bytes[10..meta_end])
            .map_err(|e| malformed(format!("metadata: {e}")))?;
        let mut rest = &bytes[meta_end..];
        let mut tensors = Vec::with_capacity(metadata.tensors.len());
        for info in &metadata.tensors {
            let len = info
                .numel()
                .checked_mul(4)
                .ok_or_else(|| malformed("tensor too large"))?;
            if rest.len() < len {
                return Err(malformed(format!(
                    "truncated payload of tensor {}",
                    info.name
                )));
            }
            let data = rest[..len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            rest = &rest[len..];
            tensors.push(Tensor {
                info: info.clone(),
                data,
            });
        }
        if !rest.is_empty() {
            return Err(malformed(format!(
                "{} trailing bytes after the last tensor",
                rest.len()
            )));
        }
        Self::new(metadata, tensors)
    }

    pub fn load(path: &Path) -> Result<Self, ScorerError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), ScorerError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}
