//! Deterministic synthetic datasets.
//!
//! * `trend`: rising and falling series, either gradual or with one step,
//!   labelled like the corresponding synthetic-control classes
//!   (3 gradual rise, 4 gradual fall, 5 step up, 6 step down).
//! * `counting`: every binary sequence of a given length, labelled with its
//!   number of ones.
//! * `counting-binary`: the same sequences, labelled 1 when at least half
//!   of the positions (5 of 10 by default) are ones, else 0.
//!
//! Counting splits: after a seeded shuffle the last `floor(N / 2)` sequences
//! are test, the `floor(N / 5)` before them validation and the rest train.
//! For `N = 1024` this gives 308 / 204 / 512.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, Label, RawDataset, Sample, Split};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("bad fixture parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrendParams {
    pub length: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
}

impl Default for TrendParams {
    fn default() -> Self {
        Self {
            length: 60,
            train_per_class: 25,
            test_per_class: 25,
            noise: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountingParams {
    pub length: usize,
}

impl Default for CountingParams {
    fn default() -> Self {
        Self { length: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FixtureKind {
    Trend(#[serde(default)] TrendParams),
    Counting(#[serde(default)] CountingParams),
    CountingBinary(#[serde(default)] CountingParams),
}

impl FixtureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FixtureKind::Trend(_) => "trend",
            FixtureKind::Counting(_) => "counting",
            FixtureKind::CountingBinary(_) => "counting-binary",
        }
    }

    /// Kind with default parameters from its name.
    pub fn from_name(name: &str) -> Result<Self, FixtureError> {
        match name {
            "trend" => Ok(FixtureKind::Trend(TrendParams::default())),
            "counting" => Ok(FixtureKind::Counting(CountingParams::default())),
            "counting-binary" => Ok(FixtureKind::CountingBinary(CountingParams::default())),
            other => Err(FixtureError::BadParams(format!("unknown fixture kind {other:?}"))),
        }
    }
}

pub const TREND_CLASSES: [Label; 4] = [3, 4, 5, 6];

/// `(train, validation, test)` sizes of the counting split.
pub fn counting_split_sizes(total: usize) -> (usize, usize, usize) {
    let test = total / 2;
    let validation = total / 5;
    (total - test - validation, validation, test)
}

pub fn generate(kind: &FixtureKind, seed: u64) -> Result<RawDataset, FixtureError> {
    match kind {
        FixtureKind::Trend(p) => trend(p, seed),
        FixtureKind::Counting(p) => counting(p, seed, |ones, _| ones as Label),
        FixtureKind::CountingBinary(p) => counting(p, seed, |ones, len| Label::from(2 * ones >= len)),
    }
}

fn trend_series(class: Label, p: &TrendParams, rng: &mut ChaCha8Rng, noise: &Normal<f64>) -> Vec<f64> {
    let n = p.length;
    let last = (n - 1) as f64;
    let slope = rng.random_range(0.2..0.5) * 60.0 / n.max(2) as f64;
    let jump = rng.random_range(7.5..20.0);
    let step_at = rng.random_range(n / 3..=(2 * n) / 3);
    (0..n)
        .map(|t| {
            let tf = t as f64;
            let shape = match class {
                3 => slope * tf,
                4 => slope * (last - tf),
                5 => jump * f64::from(u8::from(t >= step_at)),
                _ => jump * f64::from(u8::from(t < step_at)),
            };
            30.0 + shape + noise.sample(rng)
        })
        .collect()
}

fn trend(p: &TrendParams, seed: u64) -> Result<RawDataset, FixtureError> {
    if p.length < 6 {
        return Err(FixtureError::BadParams("trend length must be at least 6".into()));
    }
    if p.train_per_class == 0 {
        return Err(FixtureError::BadParams("trend needs at least one train sample per class".into()));
    }
    let noise = Normal::new(0.0, p.noise)
        .map_err(|e| FixtureError::BadParams(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for (split, per_class) in [(Split::Train, p.train_per_class), (Split::Test, p.test_per_class)] {
        let mut row = 0;
        for _ in 0..per_class {
            for class in TREND_CLASSES {
                samples.push(Sample {
                    id: format!("{}-{row}", split.as_str()),
                    label: class,
                    split,
                    values: trend_series(class, p, &mut rng, &noise),
                });
                row += 1;
            }
        }
    }
    Ok(RawDataset::new(samples)?)
}

fn counting(p: &CountingParams, seed: u64, label: impl Fn(u32, u32) -> Label) -> Result<RawDataset, FixtureError> {
    if !(2..=16).contains(&p.length) {
        return Err(FixtureError::BadParams(format!(
            "counting length must be within 2..=16, got {}",
            p.length
        )));
    }
    let len = p.length as u32;
    let mut codes: Vec<u32> = (0..1u32 << len).collect();
    codes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, validation, _) = counting_split_sizes(codes.len());
    let mut samples = Vec::with_capacity(codes.len());
    for (k, code) in codes.into_iter().enumerate() {
        let (split, row) = if k < train {
            (Split::Train, k)
        } else if k < train + validation {
            (Split::Validation, k - train)
        } else {
            (Split::Test, k - train - validation)
        };
        // most significant bit first
        let values = (0..len).rev().map(|b| f64::from((code >> b) & 1)).collect();
        samples.push(Sample {
            id: format!("{}-{row}", split.as_str()),
            label: label(code.count_ones(), len),
            split,
            values,
        });
    }
    Ok(RawDataset::new(samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_sizes_and_classes() {
        let ds = generate(&FixtureKind::Counting(CountingParams::default()), 7).unwrap();
        assert_eq!(ds.len(), 1024);
        assert_eq!(ds.classes(), (0..=10).collect::<Vec<Label>>().as_slice());
        assert_eq!(ds.split(Split::Train).count(), 308);
        assert_eq!(ds.split(Split::Validation).count(), 204);
        assert_eq!(ds.split(Split::Test).count(), 512);
        for s in ds.samples() {
            assert_eq!(s.values.iter().sum::<f64>() as Label, s.label);
        }
        let mut codes: Vec<Vec<u8>> = ds
            .samples()
            .iter()
            .map(|s| s.values.iter().map(|&v| v as u8).collect())
            .collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), 1024);
    }

    #[test]
    fn counting_binary_partition() {
        let ds = generate(&FixtureKind::CountingBinary(CountingParams::default()), 1).unwrap();
        assert_eq!(ds.classes(), &[0, 1]);
        for s in ds.samples() {
            let ones = s.values.iter().sum::<f64>();
            assert_eq!(s.label, Label::from(ones >= 5.0));
        }
    }

    #[test]
    fn seeded_determinism() {
        for kind in ["trend", "counting", "counting-binary"] {
            let k = FixtureKind::from_name(kind).unwrap();
            assert_eq!(generate(&k, 11).unwrap(), generate(&k, 11).unwrap());
        }
        let k = FixtureKind::from_name("trend").unwrap();
        assert_ne!(generate(&k, 11).unwrap(), generate(&k, 12).unwrap());
    }

    #[test]
    fn trend_shapes() {
        let p = TrendParams {
            noise: 0.0,
            ..TrendParams::default()
        };
        let ds = generate(&FixtureKind::Trend(p), 3).unwrap();
        assert_eq!(ds.classes(), &TREND_CLASSES);
        assert_eq!(ds.split(Split::Train).count(), 100);
        for s in ds.samples() {
            let (first, last) = (s.values[0], s.values[s.values.len() - 1]);
            match s.label {
                3 | 5 => assert!(last > first),
                _ => assert!(last < first),
            }
        }
    }

    #[test]
    fn params_from_json() {
        let k: FixtureKind = serde_json::from_str(r#"{"kind":"counting-binary"}"#).unwrap();
        assert_eq!(k, FixtureKind::CountingBinary(CountingParams { length: 10 }));
        let k: FixtureKind = serde_json::from_str(r#"{"kind":"trend","length":30}"#).unwrap();
        assert!(matches!(k, FixtureKind::Trend(TrendParams { length: 30, .. })));
        assert!(serde_json::from_str::<FixtureKind>(r#"{"kind":"trend","lenght":30}"#).is_err());
        assert!(generate(&FixtureKind::Counting(CountingParams { length: 1 }), 0).is_err());
    }
}
