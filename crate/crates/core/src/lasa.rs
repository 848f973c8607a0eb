//! Local abstraction of one symbolized sample driven by its LAVA.
//!
//! Positions are split by two thresholds: `a > t1` is kept as is, a maximal
//! contiguous run of `t2 < a <= t1` collapses to one point at the run's center
//! carrying the run's median value, and `a <= t2` is dropped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{ComboTag, Lava};
use crate::stats::{lower_median, MeanStd};
use crate::symbolization::SymbolizedSeries;

#[derive(Debug, Error, PartialEq)]
pub enum LasaError {
    #[error("threshold divisor must be non-zero")]
    ZeroDivisor,
    #[error("LAVA is empty")]
    EmptyLava,
    #[error("length mismatch: series {series}, LAVA {lava}")]
    LengthMismatch { series: usize, lava: usize },
    #[error("thresholds inverted: t1 = {t1} < t2 = {t2}")]
    InvertedThresholds { t1: f64, t2: f64 },
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Divide the LAVA mean.
    Avg,
    /// Divide the LAVA maximum.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub mode: ThresholdMode,
    pub s1: f64,
    pub s2: f64,
}

impl ThresholdSpec {
    pub const fn avg(s1: f64, s2: f64) -> Self {
        Self {
            mode: ThresholdMode::Avg,
            s1,
            s2,
        }
    }

    pub const fn max(s1: f64, s2: f64) -> Self {
        Self {
            mode: ThresholdMode::Max,
            s1,
            s2,
        }
    }

    /// The two average-based and two maximum-based sets used by default.
    pub fn default_grid() -> Vec<Self> {
        vec![
            Self::avg(1.0, 1.2),
            Self::avg(0.8, 1.5),
            Self::max(2.0, 3.0),
            Self::max(1.8, -1.0),
        ]
    }

    /// Short label such as `avg-1-1.2`.
    pub fn label(&self) -> String {
        let mode = match self.mode {
            ThresholdMode::Avg => "avg",
            ThresholdMode::Max => "max",
        };
        format!("{mode}-{}-{}", self.s1, self.s2)
    }
}

/// Resolved cut values; `t2 == -inf` means nothing is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t1: f64,
    #[serde(with = "neg_inf_as_null")]
    pub t2: f64,
}

/// JSON has no infinities; `-inf` is written as `null`.
pub mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::NEG_INFINITY {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

pub fn resolve_thresholds(lava: &[f64], spec: &ThresholdSpec) -> Result<Thresholds, LasaError> {
    if spec.s1 == 0.0 || spec.s2 == 0.0 {
        return Err(LasaError::ZeroDivisor);
    }
    if lava.is_empty() {
        return Err(LasaError::EmptyLava);
    }
    let base = match spec.mode {
        ThresholdMode::Avg => lava.iter().sum::<f64>() / lava.len() as f64,
        ThresholdMode::Max => lava.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let t1 = base / spec.s1;
    let t2 = if spec.s2 < 0.0 {
        f64::NEG_INFINITY
    } else {
        base / spec.s2
    };
    if t1 < t2 {
        return Err(LasaError::InvertedThresholds { t1, t2 });
    }
    Ok(Thresholds { t1, t2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    High,
    /// Representative point of a collapsed medium run.
    MediumCenter,
    /// Medium position folded into its run's center.
    MediumAbsorbed,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeptPoint {
    pub position: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abstraction {
    pub sample_id: String,
    pub combo: Option<ComboTag>,
    pub thresholds: Thresholds,
    pub n: usize,
    pub kept: Vec<KeptPoint>,
    pub provenance: Vec<Provenance>,
    /// `(n - |kept|) / n`
    pub reduction: f64,
}

impl Abstraction {
    pub fn kept_positions(&self) -> Vec<usize> {
        self.kept.iter().map(|k| k.position).collect()
    }
}

/// Abstracts a series given its per-position attention and thresholds.
///
/// Medium runs are broken by high and dropped positions. Even-length runs
/// use the lower center index and the lower median.
pub fn abstract_series(
    x: &SymbolizedSeries,
    lava: &[f64],
    thresholds: Thresholds,
) -> Result<Abstraction, LasaError> {
    let n = x.values.len();
    if lava.len() != n {
        return Err(LasaError::LengthMismatch {
            series: n,
            lava: lava.len(),
        });
    }
    let Thresholds { t1, t2 } = thresholds;
    if t1 < t2 {
        return Err(LasaError::InvertedThresholds { t1, t2 });
    }
    let mut provenance = vec![Provenance::Dropped; n];
    let mut kept = Vec::new();
    let mut i = 0;
    while i < n {
        let a = lava[i];
        if a > t1 {
            provenance[i] = Provenance::High;
            kept.push(KeptPoint {
                position: i,
                value: x.values[i],
            });
            i += 1;
        } else if a > t2 {
            let start = i;
            while i < n && lava[i] > t2 && lava[i] <= t1 {
                provenance[i] = Provenance::MediumAbsorbed;
                i += 1;
            }
            let end = i - 1;
            let center = (start + end) / 2;
            provenance[center] = Provenance::MediumCenter;
            kept.push(KeptPoint {
                position: center,
                value: lower_median(&x.values[start..=end]),
            });
        } else {
            i += 1;
        }
    }
    let reduction = (n - kept.len()) as f64 / n as f64;
    Ok(Abstraction {
        sample_id: x.id.clone(),
        combo: None,
        thresholds,
        n,
        kept,
        provenance,
        reduction,
    })
}

/// Resolves thresholds from a LAVA and abstracts the series in one step.
pub fn abstract_with(x: &SymbolizedSeries, lava: &Lava, spec: &ThresholdSpec) -> Result<Abstraction, LasaError> {
    let thresholds = resolve_thresholds(&lava.vector, spec)?;
    let mut abstraction = abstract_series(x, &lava.vector, thresholds)?;
    abstraction.combo = Some(lava.combo);
    Ok(abstraction)
}

/// Interpolated series for retraining-style validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSeries {
    /// Masked positions hold 0.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ValidationSeries {
    /// The contiguous defined segment.
    pub fn defined(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
            .collect()
    }
}

/// Linear interpolation between consecutive kept points. Positions before
/// the first and after the last kept point are masked.
pub fn interpolate(abstraction: &Abstraction, n: usize) -> ValidationSeries {
    let mut values = vec![0.0; n];
    let mut mask = vec![false; n];
    for pair in abstraction.kept.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let span = (b.position - a.position) as f64;
        for p in a.position + 1..b.position {
            values[p] = a.value + (b.value - a.value) * (p - a.position) as f64 / span;
            mask[p] = true;
        }
    }
    for k in &abstraction.kept {
        values[k.position] = k.value;
        mask[k.position] = true;
    }
    ValidationSeries { values, mask }
}

pub fn reduction_stats(batch: &[Abstraction]) -> Result<MeanStd, LasaError> {
    let reductions: Vec<f64> = batch.iter().map(|a| a.reduction).collect();
    MeanStd::of(&reductions).ok_or(LasaError::EmptyBatch)
}
