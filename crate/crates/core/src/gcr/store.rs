//! On-disk form of a finalized model: a JSON manifest plus a binary payload
//! `b"GCRB"`, `u32` version, `u32` value count, then the representation's
//! tensor as little-endian `f32` in row-major order (class axis first).
//! Maximum scores are recomputed from the decoded tensor on load.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4, Array5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::Representation;
use super::variant::{GcrVariant, Shape};
use super::{GcrError, GcrModel};
use crate::attention::ComboTag;
use crate::dataset::Label;
use crate::symbolization::mapped_values;

pub const PAYLOAD_MAGIC: &[u8; 4] = b"GCRB";
pub const STORE_VERSION: u32 = 1;
const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("payload does not start with GCRB")]
    BadMagic,
    #[error("unsupported store version {0}")]
    UnsupportedVersion(u32),
    #[error("payload has {found} values, expected {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] GcrError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub version: u32,
    pub variant: GcrVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combo: Option<ComboTag>,
    pub symbol_count: usize,
    /// Numeric value of each symbol, indexed by symbol.
    pub vocabulary: Vec<f64>,
    pub n: usize,
    pub classes: Vec<Label>,
    pub class_counts: Vec<usize>,
    pub max_scores: Vec<f64>,
    /// Payload tensor shape.
    pub dims: Vec<usize>,
}

pub fn payload_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

fn tensor_values(representation: &Representation) -> (Vec<usize>, Vec<f32>) {
    match representation {
        Representation::Fcam(t) => (t.shape().to_vec(), t.iter().map(|&v| v as f32).collect()),
        Representation::Ccam { matrices, .. } => (matrices.shape().to_vec(), matrices.iter().map(|&v| v as f32).collect()),
        Representation::Gtm(t) => (t.shape().to_vec(), t.iter().map(|&v| v as f32).collect()),
    }
}

impl GcrModel {
    pub fn manifest(&self, combo: Option<ComboTag>) -> Result<StoreManifest, GcrError> {
        let (dims, _) = tensor_values(self.representation()?);
        Ok(StoreManifest {
            version: STORE_VERSION,
            variant: *self.variant(),
            combo,
            symbol_count: self.symbol_count(),
            vocabulary: mapped_values(self.symbol_count()),
            n: self.n(),
            classes: self.classes().to_vec(),
            class_counts: self.class_counts().to_vec(),
            max_scores: self.max_scores()?.to_vec(),
            dims,
        })
    }

    pub fn encode_payload(&self) -> Result<Vec<u8>, GcrError> {
        let (_, values) = tensor_values(self.representation()?);
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * values.len());
        out.extend_from_slice(PAYLOAD_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&(values.len() as u32).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode_store(manifest: &StoreManifest, payload: &[u8]) -> Result<Self, StoreError> {
        if manifest.version != STORE_VERSION {
            return Err(StoreError::UnsupportedVersion(manifest.version));
        }
        manifest.variant.validate()?;
        if payload.len() < HEADER_LEN {
            return Err(StoreError::PayloadLength {
                expected: HEADER_LEN,
                found: payload.len(),
            });
        }
        if &payload[..4] != PAYLOAD_MAGIC {
            return Err(StoreError::BadMagic);
        }
        let version = u32::from_le_bytes(payload[4..8].try_into().expect("4 bytes"));
        if version != STORE_VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }
        let count = u32::from_le_bytes(payload[8..12].try_into().expect("4 bytes")) as usize;
        let (c, s, n) = (manifest.classes.len(), manifest.symbol_count, manifest.n);
        let expected_dims = match manifest.variant.shape {
            Shape::Fcam => vec![c, s, s, n, n],
            Shape::Ccam => vec![c, s, n, n],
            Shape::Gtm(_) => vec![c, s, n],
        };
        let expected: usize = expected_dims.iter().product();
        let found = (payload.len() - HEADER_LEN) / 4;
        if manifest.dims != expected_dims || count != expected || found != expected || (payload.len() - HEADER_LEN) % 4 != 0 {
            return Err(StoreError::PayloadLength { expected, found });
        }
        if manifest.class_counts.len() != c {
            return Err(GcrError::InvalidVariant("class counts do not match classes".into()).into());
        }
        let values: Vec<f64> = payload[HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        let shape_err = |e: ndarray::ShapeError| GcrError::InvalidVariant(e.to_string());
        let representation = match manifest.variant.shape {
            Shape::Fcam => Representation::Fcam(Array5::from_shape_vec((c, s, s, n, n), values).map_err(shape_err)?),
            Shape::Ccam => Representation::from_ccam(Array4::from_shape_vec((c, s, n, n), values).map_err(shape_err)?),
            Shape::Gtm(_) => Representation::Gtm(Array3::from_shape_vec((c, s, n), values).map_err(shape_err)?),
        };
        Ok(GcrModel::from_parts(
            manifest.variant,
            s,
            n,
            manifest.classes.clone(),
            manifest.class_counts.clone(),
            representation,
        ))
    }

    /// Writes the manifest to `manifest_path` and the payload next to it.
    pub fn write_store(&self, manifest_path: &Path, combo: Option<ComboTag>) -> Result<(), StoreError> {
        let manifest = self.manifest(combo)?;
        fs::write(manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        fs::write(payload_path(manifest_path), self.encode_payload()?)?;
        Ok(())
    }

    pub fn read_store(manifest_path: &Path) -> Result<(Self, StoreManifest), StoreError> {
        let manifest: StoreManifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
        let payload = fs::read(payload_path(manifest_path))?;
        let model = Self::decode_store(&manifest, &payload)?;
        Ok((model, manifest))
    }
}
