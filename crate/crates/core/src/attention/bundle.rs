//! Attention bundle files: a JSON manifest plus a binary payload.
//!
//! Payload layout (all little-endian):
//!
//! ```text
//! b"ATNB"
//! version       u32
//! sample_count  u32
//! layers        u32
//! heads         u32
//! n             u32
//! values        f32 * sample_count * layers * heads * n * n
//! ```
//!
//! Values are row-major over `(sample, layer, head, row, col)`. The payload
//! lives next to the manifest with the extension replaced by `.bin`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array4;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AttentionError, AttentionStack};
use crate::dataset::Label;

pub const MAGIC: &[u8; 4] = b"ATNB";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 5 * 4;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("payload does not start with ATNB")]
    BadMagic,
    #[error("unsupported bundle version {0}")]
    UnsupportedVersion(u32),
    #[error("header disagrees with manifest: {0}")]
    HeaderMismatch(String),
    #[error("payload has {found} bytes, expected {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("sample {sample_id}: {source}")]
    InvalidStack {
        sample_id: String,
        source: AttentionError,
    },
    #[error("stacks disagree in shape: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub sample_count: u32,
    pub layers: u32,
    pub heads: u32,
    pub n: u32,
    pub sample_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Label>>,
}

/// Decoded payload header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u32,
    pub sample_count: u32,
    pub layers: u32,
    pub heads: u32,
    pub n: u32,
}

impl Header {
    fn value_count(&self) -> usize {
        self.sample_count as usize
            * self.layers as usize
            * self.heads as usize
            * self.n as usize
            * self.n as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub stacks: Vec<AttentionStack>,
}

pub fn payload_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

pub fn decode_header(bytes: &[u8]) -> Result<Header, BundleError> {
    if bytes.len() < HEADER_LEN {
        return Err(BundleError::PayloadLength {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(BundleError::BadMagic);
    }
    let header = Header {
        version: read_u32(bytes, 4),
        sample_count: read_u32(bytes, 8),
        layers: read_u32(bytes, 12),
        heads: read_u32(bytes, 16),
        n: read_u32(bytes, 20),
    };
    if header.version != VERSION {
        return Err(BundleError::UnsupportedVersion(header.version));
    }
    Ok(header)
}

impl Bundle {
    /// Builds a manifest around equally shaped stacks.
    pub fn from_stacks(stacks: Vec<AttentionStack>, labels: Option<Vec<Label>>) -> Result<Self, BundleError> {
        let first = stacks
            .first()
            .ok_or_else(|| BundleError::ShapeMismatch("bundle has no samples".into()))?;
        let dim = first.tensor().dim();
        if let Some(other) = stacks.iter().find(|s| s.tensor().dim() != dim) {
            return Err(BundleError::ShapeMismatch(format!(
                "{} has shape {:?}, expected {:?}",
                other.sample_id(),
                other.tensor().dim(),
                dim
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != stacks.len() {
                return Err(BundleError::ShapeMismatch(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    stacks.len()
                )));
            }
        }
        let manifest = Manifest {
            version: VERSION,
            sample_count: stacks.len() as u32,
            layers: dim.0 as u32,
            heads: dim.1 as u32,
            n: dim.2 as u32,
            sample_ids: stacks.iter().map(|s| s.sample_id().to_string()).collect(),
            labels,
        };
        Ok(Self { manifest, stacks })
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let m = &self.manifest;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.stacks.len() * self.stacks.first().map_or(0, |s| s.tensor().len()));
        out.extend_from_slice(MAGIC);
        for v in [m.version, m.sample_count, m.layers, m.heads, m.n] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for stack in &self.stacks {
            for v in stack.tensor().iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a payload against its manifest and validates every stack.
    pub fn decode(manifest: Manifest, payload: &[u8]) -> Result<Self, BundleError> {
        let header = decode_header(payload)?;
        if manifest.version != header.version {
            return Err(BundleError::HeaderMismatch(format!(
                "version {} vs {}",
                manifest.version, header.version
            )));
        }
        let dims_manifest = (manifest.sample_count, manifest.layers, manifest.heads, manifest.n);
        let dims_header = (header.sample_count, header.layers, header.heads, header.n);
        if dims_manifest != dims_header {
            return Err(BundleError::HeaderMismatch(format!(
                "(samples, L, H, n) {dims_manifest:?} vs {dims_header:?}"
            )));
        }
        if manifest.sample_ids.len() != manifest.sample_count as usize {
            return Err(BundleError::HeaderMismatch(format!(
                "{} sample ids for {} samples",
                manifest.sample_ids.len(),
                manifest.sample_count
            )));
        }
        if let Some(labels) = &manifest.labels {
            if labels.len() != manifest.sample_count as usize {
                return Err(BundleError::HeaderMismatch(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    manifest.sample_count
                )));
            }
        }
        let expected = HEADER_LEN + 4 * header.value_count();
        if payload.len() != expected {
            return Err(BundleError::PayloadLength {
                expected,
                found: payload.len(),
            });
        }
        let (l, h, n) = (header.layers as usize, header.heads as usize, header.n as usize);
        let per_sample = l * h * n * n;
        let values: Vec<f32> = payload[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut stacks = Vec::with_capacity(manifest.sample_count as usize);
        for (chunk, id) in values.chunks_exact(per_sample.max(1)).zip(&manifest.sample_ids) {
            let tensor = Array4::from_shape_vec((l, h, n, n), chunk.to_vec())
                .map_err(|e| BundleError::ShapeMismatch(e.to_string()))?;
            let stack = AttentionStack::new(id.clone(), tensor).map_err(|source| BundleError::InvalidStack {
                sample_id: id.clone(),
                source,
            })?;
            stacks.push(stack);
        }
        Ok(Self { manifest, stacks })
    }

    pub fn write(&self, manifest_path: &Path) -> Result<(), BundleError> {
        fs::write(manifest_path, serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        fs::write(payload_path(manifest_path), self.encode_payload())?;
        Ok(())
    }

    pub fn read(manifest_path: &Path) -> Result<Self, BundleError> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
        let payload = fs::read(payload_path(manifest_path))?;
        Self::decode(manifest, &payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(id: &str, l: usize, h: usize, n: usize) -> AttentionStack {
        AttentionStack::new(id, Array4::from_elem((l, h, n, n), 1.0 / n as f32)).unwrap()
    }

    #[test]
    fn payload_layout_is_exact() {
        let mut t = Array4::<f32>::zeros((1, 1, 2, 2));
        t[[0, 0, 0, 0]] = 0.25;
        t[[0, 0, 0, 1]] = 0.75;
        t[[0, 0, 1, 0]] = 1.0;
        let bundle = Bundle::from_stacks(vec![AttentionStack::new("a", t).unwrap()], None).unwrap();
        let bytes = bundle.encode_payload();
        let mut expected = b"ATNB".to_vec();
        for v in [1u32, 1, 1, 1, 2] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        for v in [0.25f32, 0.75, 1.0, 0.0] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, expected);
    }

    #[test]
    fn decode_rejects_corruption() {
        let bundle = Bundle::from_stacks(vec![uniform("a", 1, 2, 3), uniform("b", 1, 2, 3)], Some(vec![0, 1])).unwrap();
        let payload = bundle.encode_payload();

        let mut bad_magic = payload.clone();
        bad_magic[0] = b'X';
        assert!(matches!(Bundle::decode(bundle.manifest.clone(), &bad_magic), Err(BundleError::BadMagic)));

        let mut bad_version = payload.clone();
        bad_version[4] = 9;
        assert!(matches!(
            Bundle::decode(bundle.manifest.clone(), &bad_version),
            Err(BundleError::UnsupportedVersion(9))
        ));

        let truncated = &payload[..payload.len() - 4];
        assert!(matches!(
            Bundle::decode(bundle.manifest.clone(), truncated),
            Err(BundleError::PayloadLength { .. })
        ));

        let mut wrong_n = bundle.manifest.clone();
        wrong_n.n = 4;
        assert!(matches!(Bundle::decode(wrong_n, &payload), Err(BundleError::HeaderMismatch(_))));

        // a row that does not sum to one
        let mut skewed = payload.clone();
        skewed[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&0.9f32.to_le_bytes());
        assert!(matches!(
            Bundle::decode(bundle.manifest.clone(), &skewed),
            Err(BundleError::InvalidStack { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attn.json");
        let bundle = Bundle::from_stacks(vec![uniform("s0", 2, 1, 4)], Some(vec![3])).unwrap();
        bundle.write(&path).unwrap();
        assert!(dir.path().join("attn.bin").exists());
        assert_eq!(Bundle::read(&path).unwrap(), bundle);
    }

    #[test]
    fn mixed_shapes_rejected() {
        assert!(matches!(
            Bundle::from_stacks(vec![uniform("a", 1, 1, 2), uniform("b", 1, 1, 3)], None),
            Err(BundleError::ShapeMismatch(_))
        ));
    }
}
