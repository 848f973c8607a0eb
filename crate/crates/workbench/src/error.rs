use std::fmt;
use std::path::PathBuf;

use thiserror::Error;
use tsattn_core::attention::bundle::BundleError;
use tsattn_core::attention::AttentionError;
use tsattn_core::dataset::DatasetError;
use tsattn_core::fixtures::FixtureError;
use tsattn_core::gcr::{GcrError, StoreError};
use tsattn_core::lasa::LasaError;
use tsattn_core::metrics::MetricsError;
use tsattn_core::symbolization::SaxError;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Config,
    Dataset,
    Symbolize,
    Attention,
    Aggregate,
    Lasa,
    GcrBuild,
    Classify,
    Metrics,
    Report,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Dataset => "dataset",
            Stage::Symbolize => "symbolize",
            Stage::Attention => "attention",
            Stage::Aggregate => "aggregate",
            Stage::Lasa => "lasa",
            Stage::GcrBuild => "gcr-build",
            Stage::Classify => "classify",
            Stage::Metrics => "metrics",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Any failure of the numeric core or of file handling.
#[derive(Debug, Error)]
pub enum Failure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error(transparent)]
    Sax(#[from] SaxError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Lasa(#[from] LasaError),
    #[error(transparent)]
    Gcr(#[from] GcrError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error on {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("sample {0} has no attention stack")]
    MissingStack(String),
    #[error("unknown sample {0}")]
    UnknownSample(String),
    #[error("empty batch: {0}")]
    EmptyBatch(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {failure}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub failure: Failure,
}

/// Tags a fallible result with the stage it belongs to.
pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<Failure>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            failure: e.into(),
        })
    }
}
