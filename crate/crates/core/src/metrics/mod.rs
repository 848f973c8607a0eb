//! Complexity measures for abstracted series and explainability measurements
//! over predictions and LAMAs.

mod complexity;
mod xai;

use thiserror::Error;

pub use complexity::{
    apen, ce, complexity_report, default_tolerance, sampen, svden, trend_shifts, ComplexityReport,
    DEFAULT_APEN_ORDER, DEFAULT_SVD_DELAY, DEFAULT_SVD_ORDER, DEFAULT_TREND_TOLERANCE,
};
pub use xai::{consistency, md, model_fidelity, ConsistencyReport, LabeledMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("series of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("sample entropy is undefined: no matching templates")]
    UndefinedSampEn,
    #[error("tolerance must be finite and non-negative, got {0}")]
    BadTolerance(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("matrix shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
}
