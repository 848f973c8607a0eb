use serde::{Deserialize, Serialize};

use super::{GcrError, MembershipResult};
use crate::dataset::Label;

/// Keep fractions reported by default, in percent.
pub const DEFAULT_CERTAINTY_STEPS: [u32; 5] = [100, 80, 50, 20, 10];

/// `ceil(p * total)`, ignoring representation noise such as `0.1 * 30`
/// landing just above 3.
fn kept_count(p: f64, total: usize) -> usize {
    let exact = p * total as f64;
    let rounded = exact.round();
    let keep = if (exact - rounded).abs() < 1e-9 { rounded } else { exact.ceil() };
    (keep as usize).clamp(1, total.max(1))
}

/// Accuracy among the `ceil(p * N)` most certain predictions.
///
/// Sorting is stable, so equal certainties keep their input order.
pub fn certainty_filter(results: &[MembershipResult], gold: &[Label], keep_fraction: f64) -> Result<f64, GcrError> {
    if results.is_empty() {
        return Err(GcrError::EmptyResults);
    }
    if results.len() != gold.len() {
        return Err(GcrError::LengthMismatch {
            expected: results.len(),
            found: gold.len(),
        });
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(GcrError::BadFraction(keep_fraction));
    }
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| results[b].certainty.total_cmp(&results[a].certainty));
    let keep = kept_count(keep_fraction, results.len());
    let correct = order[..keep]
        .iter()
        .filter(|&&k| results[k].predicted == gold[k])
        .count();
    Ok(correct as f64 / keep as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertaintyPoint {
    pub percent: u32,
    pub kept: usize,
    pub accuracy: f64,
}

/// [`certainty_filter`] at each percentage step.
pub fn certainty_curve(results: &[MembershipResult], gold: &[Label], steps: &[u32]) -> Result<Vec<CertaintyPoint>, GcrError> {
    steps
        .iter()
        .map(|&percent| {
            let p = f64::from(percent) / 100.0;
            Ok(CertaintyPoint {
                percent,
                kept: kept_count(p, results.len()),
                accuracy: certainty_filter(results, gold, p)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(predicted: Label, certainty: f64) -> MembershipResult {
        MembershipResult {
            scores: Vec::new(),
            predicted,
            certainty,
            margin: None,
        }
    }

    #[test]
    fn full_fraction_is_plain_accuracy() {
        let r = vec![result(0, 0.3), result(1, 0.9), result(1, 0.5), result(0, 0.1)];
        assert_eq!(certainty_filter(&r, &[0, 1, 0, 1], 1.0).unwrap(), 0.5);
    }

    #[test]
    fn top_fifth_of_ten() {
        let mut r: Vec<MembershipResult> = (0..10).map(|k| result(1, 0.1 * k as f64 / 2.0)).collect();
        r[3].certainty = 0.99;
        r[7].certainty = 0.98;
        let mut gold = vec![0; 10];
        gold[3] = 1;
        gold[7] = 1;
        assert_eq!(certainty_filter(&r, &gold, 0.2).unwrap(), 1.0);
        assert_eq!(certainty_filter(&r, &gold, 1.0).unwrap(), 0.2);
    }

    #[test]
    fn ties_keep_input_order() {
        let r = vec![result(0, 0.5), result(1, 0.5), result(1, 0.5)];
        assert_eq!(certainty_filter(&r, &[0, 0, 0], 0.3).unwrap(), 1.0);
        assert_eq!(certainty_filter(&r, &[1, 0, 0], 0.3).unwrap(), 0.0);
    }

    #[test]
    fn argument_errors() {
        assert_eq!(certainty_filter(&[], &[], 0.5), Err(GcrError::EmptyResults));
        let r = vec![result(0, 1.0)];
        assert_eq!(certainty_filter(&r, &[0], 0.0), Err(GcrError::BadFraction(0.0)));
        assert_eq!(certainty_filter(&r, &[0], 1.5), Err(GcrError::BadFraction(1.5)));
        assert!(certainty_filter(&r, &[0, 1], 1.0).is_err());
    }

    #[test]
    fn kept_count_rounds_up_exactly() {
        assert_eq!(kept_count(0.1, 30), 3);
        assert_eq!(kept_count(0.2, 10), 2);
        assert_eq!(kept_count(0.25, 10), 3);
        assert_eq!(kept_count(0.01, 10), 1);
    }

    #[test]
    fn curve_steps() {
        let r = vec![result(0, 0.9), result(0, 0.1)];
        let curve = certainty_curve(&r, &[0, 1], &DEFAULT_CERTAINTY_STEPS).unwrap();
        assert_eq!(curve[0], CertaintyPoint { percent: 100, kept: 2, accuracy: 0.5 });
        assert_eq!(curve[4], CertaintyPoint { percent: 10, kept: 1, accuracy: 1.0 });
    }
}
