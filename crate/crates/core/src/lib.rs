//! Attention-driven interpretation of symbolized univariate time series.
//!
//! The crate covers the numeric core of the workbench:
//!
//! - [`symbolization`]: train-fitted standardization and equal-width SAX.
//! - [`attention`]: positional encoding, scaled dot-product attention,
//!   attention bundles and their reduction to LAMA matrices / LAVA vectors.
//! - [`lasa`]: threshold-based local abstraction of a single sample.
//! - [`gcr`]: per-class global coherence representations (FCAM, CCAM, GTM)
//!   and membership-score classification.
//! - [`metrics`]: complexity measures and explainability measurements.
//! - [`fixtures`]: deterministic synthetic datasets.

pub mod attention;
pub mod dataset;
pub mod fixtures;
pub mod gcr;
pub mod lasa;
pub mod metrics;
pub mod stats;
pub mod symbolization;

pub use attention::{AttentionStack, ComboTag, Lama, Lava, Reduce};
pub use dataset::{Label, RawDataset, Split};
pub use gcr::{GcrModel, GcrVariant, MembershipResult};
pub use lasa::{Abstraction, ThresholdSpec, ValidationSeries};
pub use symbolization::{SaxCodec, SymbolizedSeries};
