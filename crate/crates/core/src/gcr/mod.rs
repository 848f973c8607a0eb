//! Global coherence representations.
//!
//! Train LAMAs are routed, per class, into cells addressed by
//! `(from symbol, to symbol, from position, to position)`. The full store
//! (FCAM) can be reduced over the from-symbol axis (CCAM) and then over the
//! from-position axis (GTM). Any of the three classifies a symbolized input
//! by summing its looked-up cells and dividing by the largest reachable sum.

mod certainty;
mod heatmap;
mod model;
mod store;
mod variant;

use thiserror::Error;

use crate::dataset::Label;

pub use certainty::{certainty_curve, certainty_filter, CertaintyPoint, DEFAULT_CERTAINTY_STEPS};
pub use heatmap::{heatmap, heatmap_json, Heatmap, HeatmapTile, HEATMAP_VERSION};
pub use model::{build, ClassScore, GcrModel, MembershipResult, Representation, TrainSample, SCORE_FLOOR};
pub use store::{StoreError, StoreManifest, PAYLOAD_MAGIC, STORE_VERSION};
pub use variant::{GcrVariant, Gsa, Penalty, Shape, VectorReduce, DEFAULT_ALPHA, DEFAULT_ENTROPY_FLOOR};

#[derive(Debug, Error, PartialEq)]
pub enum GcrError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("class {0} is not part of the model")]
    UnknownClass(Label),
    #[error("class {class} has zero entropy and no floor is set")]
    EntropyDegenerate { class: Label },
    #[error("model is not finalized")]
    UnfinalizedModel,
    #[error("model is already finalized")]
    AlreadyFinalized,
    #[error("symbol {symbol} outside vocabulary of size {symbol_count}")]
    VocabularyMismatch { symbol: usize, symbol_count: usize },
    #[error("expected length {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid variant: {0}")]
    InvalidVariant(String),
    #[error("no results to filter")]
    EmptyResults,
    #[error("keep fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
}
