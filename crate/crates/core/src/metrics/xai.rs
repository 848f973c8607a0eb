use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::dataset::Label;
use crate::stats::MeanStd;

/// Euclidean (Frobenius) distance between two equally shaped matrices.
pub fn md(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::ShapeMismatch(a.dim(), b.dim()));
    }
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Fraction of positions on which two predictors agree.
pub fn model_fidelity(a: &[Label], b: &[Label]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(agree as f64 / a.len() as f64)
}

/// One LAMA of one sample in one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMatrix {
    pub sample_id: String,
    pub label: Label,
    pub matrix: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub outer_distance: MeanStd,
    pub inner_fold_distance: MeanStd,
    pub inner_class_distance: MeanStd,
    /// Sampled ids per class, taken from the first fold in input order.
    pub sampled: BTreeMap<Label, Vec<String>>,
}

/// LAMA consistency across folds (models) and within one fold.
///
/// `folds[f]` holds the LAMAs produced by model `f`. The first
/// `samples_per_class` ids of each class in fold 0 are sampled; every fold
/// must contain them.
pub fn consistency(folds: &[Vec<LabeledMatrix>], samples_per_class: usize) -> Result<ConsistencyReport, MetricsError> {
    if folds.len() < 2 {
        return Err(MetricsError::InsufficientSamples(format!(
            "need at least 2 folds, got {}",
            folds.len()
        )));
    }
    let mut sampled: BTreeMap<Label, Vec<String>> = BTreeMap::new();
    for m in &folds[0] {
        let ids = sampled.entry(m.label).or_default();
        if ids.len() < samples_per_class {
            ids.push(m.sample_id.clone());
        }
    }
    if sampled.len() < 2 {
        return Err(MetricsError::InsufficientSamples(format!(
            "need at least 2 classes, got {}",
            sampled.len()
        )));
    }
    let picks: Vec<(&String, Label)> = sampled
        .iter()
        .flat_map(|(label, ids)| ids.iter().map(move |id| (id, *label)))
        .collect();

    // per fold: sampled id -> matrix
    let mut lookup: Vec<HashMap<&str, &LabeledMatrix>> = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let index: HashMap<&str, &LabeledMatrix> = fold.iter().map(|m| (m.sample_id.as_str(), m)).collect();
        for (id, label) in &picks {
            match index.get(id.as_str()) {
                Some(m) if m.label == *label => {}
                Some(_) => {
                    return Err(MetricsError::InsufficientSamples(format!(
                        "sample {id} changes class in fold {f}"
                    )))
                }
                None => {
                    return Err(MetricsError::InsufficientSamples(format!(
                        "sample {id} missing from fold {f}"
                    )))
                }
            }
        }
        lookup.push(index);
    }

    let (mut outer, mut inner_fold, mut inner_class) = (Vec::new(), Vec::new(), Vec::new());
    for f in 0..folds.len() {
        for (id, label) in &picks {
            let a = &lookup[f][id.as_str()].matrix;
            for (g, other) in lookup.iter().enumerate() {
                if g != f {
                    outer.push(md(a, &other[id.as_str()].matrix)?);
                }
            }
            for (other_id, other_label) in &picks {
                if other_id == id {
                    continue;
                }
                let d = md(a, &lookup[f][other_id.as_str()].matrix)?;
                if other_label == label {
                    inner_class.push(d);
                } else {
                    inner_fold.push(d);
                }
            }
        }
    }
    let summarize = |values: &[f64], what: &str| {
        MeanStd::of(values).ok_or_else(|| MetricsError::InsufficientSamples(format!("no pairs for {what}")))
    };
    Ok(ConsistencyReport {
        outer_distance: summarize(&outer, "outer distance")?,
        inner_fold_distance: summarize(&inner_fold, "inner fold distance")?,
        inner_class_distance: summarize(&inner_class, "inner class distance")?,
        sampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn md_of_identity_and_zero() {
        let d = md(&Array2::eye(2), &Array2::zeros((2, 2))).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!(md(&Array2::eye(2), &Array2::eye(3)).is_err());
    }

    #[test]
    fn fidelity() {
        assert_eq!(model_fidelity(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert!((model_fidelity(&[1, 0, 1], &[1, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(model_fidelity(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(model_fidelity(&[], &[]), Err(MetricsError::Empty));
        assert_eq!(model_fidelity(&[1], &[1, 2]), Err(MetricsError::LengthMismatch(1, 2)));
    }

    fn lm(id: &str, label: Label, m: Array2<f64>) -> LabeledMatrix {
        LabeledMatrix {
            sample_id: id.into(),
            label,
            matrix: m,
        }
    }

    #[test]
    fn identical_lamas_have_zero_distances() {
        let fold: Vec<LabeledMatrix> = (0..6)
            .map(|i| lm(&format!("s{i}"), i % 2, Array2::eye(3)))
            .collect();
        let report = consistency(&[fold.clone(), fold], 3).unwrap();
        assert_eq!(report.outer_distance.mean, 0.0);
        assert_eq!(report.inner_fold_distance.mean, 0.0);
        assert_eq!(report.inner_class_distance.mean, 0.0);
    }

    #[test]
    fn duplicated_fold_keeps_inner_distances() {
        let fold = vec![
            lm("a", 0, array![[0.0, 0.0], [0.0, 0.0]]),
            lm("b", 0, array![[1.0, 0.0], [0.0, 0.0]]),
            lm("c", 1, array![[0.0, 3.0], [4.0, 0.0]]),
            lm("d", 1, array![[0.0, 0.0], [0.0, 0.0]]),
        ];
        let single = consistency(&[fold.clone(), fold.clone()], 2).unwrap();
        assert_eq!(single.outer_distance.mean, 0.0);
        // class 0 pair: 1; class 1 pair: 5
        assert_eq!(single.inner_class_distance.mean, 3.0);
        let triple = consistency(&[fold.clone(), fold.clone(), fold], 2).unwrap();
        assert_eq!(triple.inner_class_distance, single.inner_class_distance);
        assert_eq!(triple.inner_fold_distance, single.inner_fold_distance);
    }

    #[test]
    fn insufficient_inputs() {
        let fold = vec![lm("a", 0, Array2::eye(2)), lm("b", 1, Array2::eye(2))];
        assert!(consistency(&[fold.clone()], 3).is_err());
        let one_class = vec![lm("a", 0, Array2::eye(2)), lm("b", 0, Array2::eye(2))];
        assert!(consistency(&[one_class.clone(), one_class], 3).is_err());
        let missing = vec![lm("a", 0, Array2::eye(2))];
        assert!(consistency(&[fold, missing], 3).is_err());
    }
}
