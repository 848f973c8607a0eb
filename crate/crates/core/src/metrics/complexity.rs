use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::MetricsError;

pub const DEFAULT_APEN_ORDER: usize = 2;
pub const DEFAULT_SVD_ORDER: usize = 3;
pub const DEFAULT_SVD_DELAY: usize = 1;
pub const DEFAULT_TREND_TOLERANCE: f64 = 0.001;

fn require_len(x: &[f64], min: usize) -> Result<(), MetricsError> {
    if x.len() < min {
        Err(MetricsError::TooShort { len: x.len(), min })
    } else {
        Ok(())
    }
}

/// Complexity estimate: length of the line through consecutive points,
/// `sqrt(sum (x[i] - x[i+1])^2)`. Expects z-normalized input.
pub fn ce(x: &[f64]) -> Result<f64, MetricsError> {
    require_len(x, 2)?;
    Ok(x.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum::<f64>().sqrt())
}

/// Singular value decomposition entropy of the delay embedding.
///
/// Singular values below `max * rows * eps` count as zero, so a rank-one
/// embedding (e.g. a constant series) scores exactly 0. An all-zero series
/// also scores 0.
pub fn svden(x: &[f64], order: usize, delay: usize) -> Result<f64, MetricsError> {
    let span = (order.max(1) - 1) * delay.max(1);
    require_len(x, (order + 1).max(span + 1))?;
    let rows = x.len() - span;
    let embedding = DMatrix::from_fn(rows, order, |i, k| x[i + k * delay]);
    let singular = embedding.singular_values();
    let largest = singular.max();
    if largest <= 0.0 {
        return Ok(0.0);
    }
    let cutoff = largest * rows.max(order) as f64 * f64::EPSILON;
    let kept: Vec<f64> = singular.iter().copied().filter(|&s| s > cutoff).collect();
    let total: f64 = kept.iter().sum();
    Ok(kept
        .iter()
        .map(|s| {
            let p = s / total;
            p * p.recip().ln()
        })
        .sum())
}

/// `0.2 * std(x)` with the population standard deviation.
pub fn default_tolerance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    0.2 * crate::stats::population_std(x, crate::stats::mean(x))
}

fn check_tolerance(r: f64) -> Result<(), MetricsError> {
    if r.is_finite() && r >= 0.0 {
        Ok(())
    } else {
        Err(MetricsError::BadTolerance(r))
    }
}

/// Approximate entropy `phi^m(r) - phi^{m+1}(r)`, self-matches included.
///
/// Templates match when their Chebyshev distance is `<= r`.
pub fn apen(x: &[f64], m: usize, r: f64) -> Result<f64, MetricsError> {
    require_len(x, m + 2)?;
    check_tolerance(r)?;
    let n = x.len();
    let short = n - m + 1;
    let long = n - m;
    let mut counts_m = vec![1u64; short];
    let mut counts_m1 = vec![1u64; long];
    for i in 0..short {
        for j in i + 1..short {
            if (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= r) {
                counts_m[i] += 1;
                counts_m[j] += 1;
                if j < long && (x[i + m] - x[j + m]).abs() <= r {
                    counts_m1[i] += 1;
                    counts_m1[j] += 1;
                }
            }
        }
    }
    let phi = |counts: &[u64]| {
        let total = counts.len() as f64;
        counts.iter().map(|&c| (c as f64 / total).ln()).sum::<f64>() / total
    };
    Ok(phi(&counts_m) - phi(&counts_m1))
}

/// Sample entropy `-ln(A / B)`, self-matches excluded.
///
/// Both counts range over the first `N - m` templates. Returns
/// [`MetricsError::UndefinedSampEn`] when either count is zero.
pub fn sampen(x: &[f64], m: usize, r: f64) -> Result<f64, MetricsError> {
    require_len(x, m + 2)?;
    check_tolerance(r)?;
    let long = x.len() - m;
    let (mut a, mut b) = (0u64, 0u64);
    for i in 0..long {
        for j in i + 1..long {
            if (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= r) {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    if a == 0 || b == 0 {
        return Err(MetricsError::UndefinedSampEn);
    }
    Ok((b as f64 / a as f64).ln())
}

/// Number of slope changes of at least `r` between consecutive unit steps.
pub fn trend_shifts(x: &[f64], r: f64) -> Result<usize, MetricsError> {
    require_len(x, 3)?;
    Ok(x
        .windows(3)
        .filter(|w| ((w[2] - w[1]) - (w[1] - w[0])).abs() >= r)
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub ce: f64,
    pub svden: f64,
    pub apen: f64,
    /// `None` when no templates match.
    pub sampen: Option<f64>,
    pub trend_shifts: usize,
    pub data_reduction: f64,
}

/// All complexity measures with their default parameters.
pub fn complexity_report(x: &[f64], data_reduction: f64) -> Result<ComplexityReport, MetricsError> {
    let r = default_tolerance(x);
    let sampen = match sampen(x, DEFAULT_APEN_ORDER, r) {
        Ok(v) => Some(v),
        Err(MetricsError::UndefinedSampEn) => None,
        Err(e) => return Err(e),
    };
    Ok(ComplexityReport {
        ce: ce(x)?,
        svden: svden(x, DEFAULT_SVD_ORDER, DEFAULT_SVD_DELAY)?,
        apen: apen(x, DEFAULT_APEN_ORDER, r)?,
        sampen,
        trend_shifts: trend_shifts(x, DEFAULT_TREND_TOLERANCE)?,
        data_reduction,
    })
}
