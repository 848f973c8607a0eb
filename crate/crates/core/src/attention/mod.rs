//! Attention stacks and their reduction to LAMA matrices and LAVA vectors.
//!
//! A stack holds every `(layer, head)` attention matrix of one sample as
//! binary32 values, the precision of the bundle format. Reductions run in
//! `f64`; since every entry is binary32-representable, sums of a handful of
//! non-tiny entries are exact and independent of summation order.

mod aggregate;
pub mod bundle;
mod mha;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array4};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use aggregate::{aggregate_lama, aggregate_lava};
pub use mha::{attention_matrix, forward_attention, positional_encoding, HeadWeights, MhaWeights};

/// Row sums of ingested matrices must be within this distance of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum AttentionError {
    #[error("model dimension must be even and at least 2, got {0}")]
    OddDimension(usize),
    #[error("non-finite value in input")]
    NonFiniteValue,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("row {row} of layer {layer} head {head} sums to {sum}")]
    NonStochasticRow {
        layer: usize,
        head: usize,
        row: usize,
        sum: f64,
    },
    #[error("entry out of [0, 1] at layer {layer} head {head} ({row}, {col}): {value}")]
    EntryOutOfRange {
        layer: usize,
        head: usize,
        row: usize,
        col: usize,
        value: f32,
    },
    #[error("invalid combo tag {0:?}")]
    InvalidCombo(String),
}

/// All `(layer, head)` attention matrices of one sample, shape `(L, H, n, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStack {
    sample_id: String,
    tensor: Array4<f32>,
}

impl AttentionStack {
    /// Validates shape, range and row-stochasticity. Offending stacks are
    /// rejected, never renormalized.
    pub fn new(sample_id: impl Into<String>, tensor: Array4<f32>) -> Result<Self, AttentionError> {
        let (layers, heads, rows, cols) = tensor.dim();
        if rows != cols || rows == 0 || layers == 0 || heads == 0 {
            return Err(AttentionError::DimensionMismatch(format!(
                "stack shape ({layers}, {heads}, {rows}, {cols})"
            )));
        }
        for l in 0..layers {
            for h in 0..heads {
                for i in 0..rows {
                    let mut sum = 0.0f64;
                    for j in 0..cols {
                        let value = tensor[[l, h, i, j]];
                        if !value.is_finite()
                            || value < 0.0
                            || f64::from(value) > 1.0 + ROW_SUM_TOLERANCE
                        {
                            return Err(AttentionError::EntryOutOfRange {
                                layer: l,
                                head: h,
                                row: i,
                                col: j,
                                value,
                            });
                        }
                        sum += f64::from(value);
                    }
                    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(AttentionError::NonStochasticRow {
                            layer: l,
                            head: h,
                            row: i,
                            sum,
                        });
                    }
                }
            }
        }
        Ok(Self {
            sample_id: sample_id.into(),
            tensor,
        })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn tensor(&self) -> &Array4<f32> {
        &self.tensor
    }

    pub fn layers(&self) -> usize {
        self.tensor.dim().0
    }

    pub fn heads(&self) -> usize {
        self.tensor.dim().1
    }

    pub fn n(&self) -> usize {
        self.tensor.dim().2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reduce {
    Max,
    Sum,
}

impl Reduce {
    fn letter(self) -> char {
        match self {
            Reduce::Max => 'm',
            Reduce::Sum => 's',
        }
    }

    fn parse(text: &str) -> Option<Self> {
        match text {
            "m" | "max" => Some(Reduce::Max),
            "s" | "sum" => Some(Reduce::Sum),
            _ => None,
        }
    }

    #[inline]
    pub fn combine(self, acc: f64, value: f64) -> f64 {
        match self {
            Reduce::Max => acc.max(value),
            Reduce::Sum => acc + value,
        }
    }
}

impl fmt::Display for Reduce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reduce::Max => "max",
            Reduce::Sum => "sum",
        })
    }
}

impl FromStr for Reduce {
    type Err = AttentionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Reduce::parse(s).ok_or_else(|| AttentionError::InvalidCombo(s.to_string()))
    }
}

impl Serialize for Reduce {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Reduce {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Which axis the first reduction step collapses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Order {
    /// `hl`: heads first, then layers.
    HeadsFirst,
    /// `lh`: layers first, then heads.
    LayersFirst,
}

/// Aggregation selectors, rendered as `hl-ms` (LAMA) or `hl-msm` (LAVA).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComboTag {
    pub order: Order,
    pub step1: Reduce,
    pub step2: Reduce,
    pub step3: Option<Reduce>,
}

impl ComboTag {
    pub const fn lama(order: Order, step1: Reduce, step2: Reduce) -> Self {
        Self {
            order,
            step1,
            step2,
            step3: None,
        }
    }

    pub fn with_step3(self, step3: Reduce) -> Self {
        Self {
            step3: Some(step3),
            ..self
        }
    }

    /// The LAMA part of the tag.
    pub fn lama_part(self) -> Self {
        Self {
            step3: None,
            ..self
        }
    }

    /// All eight LAMA combos.
    pub fn all_lama() -> Vec<Self> {
        let mut out = Vec::with_capacity(8);
        for order in [Order::HeadsFirst, Order::LayersFirst] {
            for step1 in [Reduce::Max, Reduce::Sum] {
                for step2 in [Reduce::Max, Reduce::Sum] {
                    out.push(Self::lama(order, step1, step2));
                }
            }
        }
        out
    }
}

impl fmt::Display for ComboTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let order = match self.order {
            Order::HeadsFirst => "hl",
            Order::LayersFirst => "lh",
        };
        write!(f, "{order}-{}{}", self.step1.letter(), self.step2.letter())?;
        if let Some(step3) = self.step3 {
            write!(f, "{}", step3.letter())?;
        }
        Ok(())
    }
}

impl FromStr for ComboTag {
    type Err = AttentionError;

    /// Accepts the short form (`hl-ms`, `lh-smm`) and the long form
    /// (`hl-max-sum`, `hl-max-sum-max`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AttentionError::InvalidCombo(s.to_string());
        let mut parts = s.trim().split('-');
        let order = match parts.next() {
            Some("hl") => Order::HeadsFirst,
            Some("lh") => Order::LayersFirst,
            _ => return Err(bad()),
        };
        let rest: Vec<&str> = parts.collect();
        let steps: Vec<Reduce> = match rest.as_slice() {
            [short] => short
                .chars()
                .map(|c| Reduce::parse(&c.to_string()))
                .collect::<Option<_>>()
                .ok_or_else(bad)?,
            long => long
                .iter()
                .map(|p| Reduce::parse(p))
                .collect::<Option<_>>()
                .ok_or_else(bad)?,
        };
        match steps.as_slice() {
            [a, b] => Ok(Self::lama(order, *a, *b)),
            [a, b, c] => Ok(Self::lama(order, *a, *b).with_step3(*c)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for ComboTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ComboTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Local attention matrix aggregation of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lama {
    pub sample_id: String,
    pub combo: ComboTag,
    pub matrix: Array2<f64>,
}

impl Lama {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Local attention vector abstraction: one value per position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lava {
    pub sample_id: String,
    pub combo: ComboTag,
    pub vector: Vec<f64>,
}
