//! Experiment configuration, read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsattn_core::fixtures::FixtureKind;
use tsattn_core::gcr::{GcrVariant, Gsa, Shape, VectorReduce, DEFAULT_CERTAINTY_STEPS};
use tsattn_core::{ComboTag, Reduce, ThresholdSpec};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Train and optional test files, one labelled series per row.
    Files { train: PathBuf, test: Option<PathBuf> },
    Fixture { fixture: FixtureKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightInit {
    /// All projections zero: every attention matrix is uniform.
    Zero,
    /// Gaussian entries with standard deviation `scale`, seeded from the
    /// experiment seed.
    Random { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AttentionSource {
    /// Bundle manifest path; stacks are matched to samples by id.
    Bundle { path: PathBuf },
    /// Stacks computed in-process from fixed weights.
    Forward {
        layers: usize,
        heads: usize,
        d_model: usize,
        d_k: usize,
        init: WeightInit,
        #[serde(default = "yes")]
        use_pe: bool,
    },
}

fn yes() -> bool {
    true
}

impl AttentionSource {
    pub fn uniform() -> Self {
        AttentionSource::Forward {
            layers: 1,
            heads: 1,
            d_model: 2,
            d_k: 1,
            init: WeightInit::Zero,
            use_pe: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub attention: AttentionSource,
    pub symbol_count: usize,
    /// LAMA combos; each is paired with every entry of `lava_steps` for LASA.
    pub combos: Vec<ComboTag>,
    pub lava_steps: Vec<Reduce>,
    pub lasa_thresholds: Vec<ThresholdSpec>,
    pub gcr_variants: Vec<GcrVariant>,
    /// Variants whose per-class heatmaps are exported.
    pub heatmap_variants: Vec<GcrVariant>,
    pub certainty_steps: Vec<u32>,
    /// Write the binary GCR stores next to the reports.
    pub export_stores: bool,
    /// Optional baseline predictions (`sample_id,predicted`) for fidelity.
    pub baseline_predictions: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

pub fn default_combos() -> Vec<ComboTag> {
    ["hl-mm", "hl-ms", "hl-sm", "hl-ss"]
        .iter()
        .map(|t| t.parse().expect("static tag"))
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Fixture {
                fixture: FixtureKind::from_name("trend").expect("known fixture"),
            },
            attention: AttentionSource::uniform(),
            symbol_count: 7,
            combos: default_combos(),
            lava_steps: vec![Reduce::Max, Reduce::Sum],
            lasa_thresholds: ThresholdSpec::default_grid(),
            gcr_variants: GcrVariant::default_grid(),
            heatmap_variants: vec![GcrVariant::new(Shape::Gtm(VectorReduce::Avg), Gsa::Sum)],
            certainty_steps: DEFAULT_CERTAINTY_STEPS.to_vec(),
            export_stores: true,
            baseline_predictions: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config; relative paths resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        let mut config: Self = serde_json::from_str(&text)?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Files { train, test } = &mut self.data {
            fix(train);
            if let Some(t) = test {
                fix(t);
            }
        }
        if let AttentionSource::Bundle { path } = &mut self.attention {
            fix(path);
        }
        if let Some(p) = &mut self.baseline_predictions {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut paths: Vec<&Path> = Vec::new();
        if let DataSource::Files { train, test } = &self.data {
            paths.push(train);
            paths.extend(test.as_deref());
        }
        if let AttentionSource::Bundle { path } = &self.attention {
            paths.push(path);
        }
        paths.extend(self.baseline_predictions.as_deref());
        if let Some(missing) = paths.into_iter().find(|p| !p.is_file()) {
            return Err(ConfigError::MissingFile(missing.to_path_buf()));
        }
        if self.symbol_count < 2 {
            return Err(ConfigError::Invalid(format!("symbol_count must be >= 2, got {}", self.symbol_count)));
        }
        if self.combos.is_empty() {
            return Err(ConfigError::Invalid("at least one combo is required".into()));
        }
        if self.combos.iter().any(|c| c.step3.is_some()) {
            return Err(ConfigError::Invalid("combos name LAMA aggregations; put step3 into lava_steps".into()));
        }
        for v in self.gcr_variants.iter().chain(&self.heatmap_variants) {
            v.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if let Some(v) = self.heatmap_variants.iter().find(|v| !self.gcr_variants.contains(v)) {
            return Err(ConfigError::Invalid(format!("heatmap variant {v} is not in gcr_variants")));
        }
        if self.lasa_thresholds.iter().any(|t| t.s1 == 0.0 || t.s2 == 0.0) {
            return Err(ConfigError::Invalid("threshold divisors must be non-zero".into()));
        }
        if let Some(s) = self.certainty_steps.iter().find(|&&s| s == 0 || s > 100) {
            return Err(ConfigError::Invalid(format!("certainty step {s} outside 1..=100")));
        }
        if let AttentionSource::Forward { d_model, .. } = &self.attention {
            if *d_model < 2 || d_model % 2 == 1 {
                return Err(ConfigError::Invalid(format!("d_model must be even and >= 2, got {d_model}")));
            }
        }
        Ok(())
    }
}
