//! Standardization and equal-width SAX discretization.
//!
//! The codec is fitted on train rows only. Values are standardized with the
//! global train mean/std, then cut into `S` equal-width bins spanning the
//! standardized train range. Symbol `k` maps to the numeric value
//! `-1 + 2k/(S-1)`, which is both the model input and the GCR vocabulary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;

#[derive(Debug, Error, PartialEq)]
pub enum SaxError {
    #[error("no train series supplied")]
    EmptyTrainSet,
    #[error("non-finite value in input")]
    NonFiniteValue,
    #[error("symbol count must be at least 2, got {0}")]
    TooFewSymbols(usize),
    #[error("series must have at least 2 points")]
    TooShort,
    #[error("series length {found} differs from expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaxCodec {
    pub symbol_count: usize,
    pub mean: f64,
    pub std: f64,
    /// `S - 1` strictly increasing cut values in standardized space.
    pub breakpoints: Vec<f64>,
    /// `S` values evenly spaced over `[-1, 1]`.
    pub mapped_values: Vec<f64>,
    /// Standardized `[low, high]` range the bins were laid over.
    pub range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolizedSeries {
    pub id: String,
    pub label: Label,
    pub symbols: Vec<usize>,
    pub values: Vec<f64>,
}

impl SymbolizedSeries {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Evenly spaced mapping of `symbol_count` symbols onto `[-1, 1]`.
pub fn mapped_values(symbol_count: usize) -> Vec<f64> {
    let last = (symbol_count - 1) as f64;
    (0..symbol_count)
        .map(|k| -1.0 + 2.0 * k as f64 / last)
        .collect()
}

impl SaxCodec {
    /// Fits the codec on train series.
    ///
    /// A zero standard deviation is replaced by 1, and a degenerate
    /// standardized range (all values equal) is widened to `[v - 1, v + 1]`
    /// so that constant data lands in the middle bin.
    pub fn fit<S: AsRef<[f64]>>(train: &[S], symbol_count: usize) -> Result<Self, SaxError> {
        if symbol_count < 2 {
            return Err(SaxError::TooFewSymbols(symbol_count));
        }
        if train.is_empty() {
            return Err(SaxError::EmptyTrainSet);
        }
        let n = train[0].as_ref().len();
        let mut count = 0usize;
        let mut sum = 0.0;
        for series in train {
            let series = series.as_ref();
            if series.len() < 2 {
                return Err(SaxError::TooShort);
            }
            if series.len() != n {
                return Err(SaxError::LengthMismatch {
                    expected: n,
                    found: series.len(),
                });
            }
            if series.iter().any(|v| !v.is_finite()) {
                return Err(SaxError::NonFiniteValue);
            }
            count += series.len();
            sum += series.iter().sum::<f64>();
        }
        let mean = sum / count as f64;
        let var = train
            .iter()
            .flat_map(|s| s.as_ref().iter())
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / count as f64;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };

        let (mut low, mut high) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in train.iter().flat_map(|s| s.as_ref().iter()) {
            let z = (v - mean) / std;
            low = low.min(z);
            high = high.max(z);
        }
        if high <= low {
            low -= 1.0;
            high += 1.0;
        }
        let width = (high - low) / symbol_count as f64;
        let breakpoints = (1..symbol_count)
            .map(|k| low + width * k as f64)
            .collect();

        Ok(Self {
            symbol_count,
            mean,
            std,
            breakpoints,
            mapped_values: mapped_values(symbol_count),
            range: [low, high],
        })
    }

    pub fn standardize(&self, value: f64) -> f64 {
        (value - self.mean) / self.std
    }

    /// Bin of a raw value. Bins are half-open `[lo, hi)`; values outside the
    /// fitted range clamp to the outermost bins.
    pub fn symbol(&self, value: f64) -> usize {
        let z = self.standardize(value);
        self.breakpoints.partition_point(|&b| b <= z)
    }

    /// Center of a symbol's bin in standardized space.
    pub fn bin_center(&self, symbol: usize) -> f64 {
        let width = (self.range[1] - self.range[0]) / self.symbol_count as f64;
        self.range[0] + width * (symbol as f64 + 0.5)
    }

    pub fn transform_values(&self, series: &[f64]) -> Result<(Vec<usize>, Vec<f64>), SaxError> {
        if series.iter().any(|v| !v.is_finite()) {
            return Err(SaxError::NonFiniteValue);
        }
        let symbols: Vec<usize> = series.iter().map(|&v| self.symbol(v)).collect();
        let values = symbols.iter().map(|&s| self.mapped_values[s]).collect();
        Ok((symbols, values))
    }

    pub fn transform(
        &self,
        id: impl Into<String>,
        label: Label,
        series: &[f64],
    ) -> Result<SymbolizedSeries, SaxError> {
        let (symbols, values) = self.transform_values(series)?;
        Ok(SymbolizedSeries {
            id: id.into(),
            label,
            symbols,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_one_to_six() {
        // mean 3.5, std sqrt(17.5/6); standardized range +-1.46385, bins of width 0.97590
        let codec = SaxCodec::fit(&[vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]], 3).unwrap();
        assert!((codec.mean - 3.5).abs() < 1e-15);
        assert!((codec.std - (17.5f64 / 6.0).sqrt()).abs() < 1e-15);
        let half = 2.5 / (17.5f64 / 6.0).sqrt();
        assert!((codec.breakpoints[0] - (-half / 3.0)).abs() < 1e-12);
        assert!((codec.breakpoints[1] - (half / 3.0)).abs() < 1e-12);

        let (symbols, values) = codec.transform_values(&[1.0, 6.0]).unwrap();
        assert_eq!(symbols, vec![0, 2]);
        assert_eq!(values, vec![-1.0, 1.0]);
        let (symbols, _) = codec.transform_values(&[1.0, 3.5, 6.0]).unwrap();
        assert_eq!(symbols, vec![0, 1, 2]);
    }

    #[test]
    fn constant_series_maps_to_middle() {
        let codec = SaxCodec::fit(&[vec![4.2; 5]], 3).unwrap();
        assert_eq!(codec.std, 1.0);
        let s = codec.transform("a", 0, &[4.2; 5]).unwrap();
        assert_eq!(s.symbols, vec![1; 5]);
        assert_eq!(s.values, vec![0.0; 5]);
    }

    #[test]
    fn three_symbols_map_to_minus_one_zero_one() {
        assert_eq!(mapped_values(3), vec![-1.0, 0.0, 1.0]);
        let mv = mapped_values(5);
        assert_eq!(mv.first(), Some(&-1.0));
        assert_eq!(mv.last(), Some(&1.0));
        for w in mv.windows(2) {
            assert!((w[1] - w[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_range_clamps() {
        let codec = SaxCodec::fit(&[vec![0.0, 1.0, 2.0]], 4).unwrap();
        assert_eq!(codec.symbol(-100.0), 0);
        assert_eq!(codec.symbol(100.0), 3);
    }

    #[test]
    fn breakpoint_ties_go_up() {
        let codec = SaxCodec::fit(&[vec![0.0, 3.0]], 3).unwrap();
        let raw_at_bp = codec.breakpoints[0] * codec.std + codec.mean;
        // half-open bins: a value on a breakpoint belongs to the upper bin
        assert_eq!(codec.symbol(raw_at_bp), 1);
    }

    #[test]
    fn errors() {
        let empty: [Vec<f64>; 0] = [];
        assert_eq!(SaxCodec::fit(&empty, 3), Err(SaxError::EmptyTrainSet));
        assert_eq!(
            SaxCodec::fit(&[vec![1.0, f64::NAN]], 3),
            Err(SaxError::NonFiniteValue)
        );
        assert_eq!(
            SaxCodec::fit(&[vec![1.0, 2.0]], 1),
            Err(SaxError::TooFewSymbols(1))
        );
        let codec = SaxCodec::fit(&[vec![1.0, 2.0]], 2).unwrap();
        assert_eq!(
            codec.transform_values(&[f64::INFINITY]),
            Err(SaxError::NonFiniteValue)
        );
    }
}
