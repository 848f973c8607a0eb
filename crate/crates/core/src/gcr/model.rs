use std::collections::BTreeMap;

use ndarray::{Array2, Array3, Array4, Array5};
use serde::{Deserialize, Serialize};

use super::variant::{GcrVariant, Gsa, Penalty, Shape, VectorReduce};
use super::GcrError;
use crate::dataset::Label;
use crate::lasa::neg_inf_as_null;
use crate::stats::median;
use crate::symbolization::SymbolizedSeries;

/// Maximum scores at or below this value make a class unelectable.
pub const SCORE_FLOOR: f64 = 1e-12;

/// One training input: a symbolized series (carrying its class) and its LAMA.
#[derive(Debug, Clone, Copy)]
pub struct TrainSample<'a> {
    pub series: &'a SymbolizedSeries,
    pub lama: &'a Array2<f64>,
}

/// Finalized store contents. Class is always the leading axis.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    /// `[class][from symbol][to symbol][from pos][to pos]`
    Fcam(Array5<f64>),
    /// `[class][to symbol][from pos][to pos]`; `column_means` holds
    /// `[class][to symbol][to pos]`, the from-position mean used for scoring.
    Ccam {
        matrices: Array4<f64>,
        column_means: Array3<f64>,
    },
    /// `[class][symbol][pos]`
    Gtm(Array3<f64>),
}

impl Representation {
    /// Builds the representation for `shape` from a finalized full store.
    pub(crate) fn derive(full: Array5<f64>, shape: Shape) -> Self {
        match shape {
            Shape::Fcam => Representation::Fcam(full),
            Shape::Ccam => Representation::from_ccam(reduce_from_symbol(&full)),
            Shape::Gtm(reduce) => Representation::Gtm(reduce_from_position(&reduce_from_symbol(&full), reduce)),
        }
    }

    pub(crate) fn from_ccam(matrices: Array4<f64>) -> Self {
        let column_means = reduce_from_position(&matrices, VectorReduce::Avg);
        Representation::Ccam { matrices, column_means }
    }

    /// Per-class sum of the per-position best value.
    fn max_scores(&self) -> Vec<f64> {
        match self {
            Representation::Fcam(full) => {
                let (classes, symbols, _, n, _) = full.dim();
                (0..classes)
                    .map(|c| {
                        let mut total = 0.0;
                        for i in 0..n {
                            for j in 0..n {
                                let mut best = f64::NEG_INFINITY;
                                for u in 0..symbols {
                                    for v in 0..symbols {
                                        best = best.max(full[[c, u, v, i, j]]);
                                    }
                                }
                                total += best;
                            }
                        }
                        total
                    })
                    .collect()
            }
            Representation::Ccam { column_means: vectors, .. } | Representation::Gtm(vectors) => {
                let (classes, symbols, n) = vectors.dim();
                (0..classes)
                    .map(|c| {
                        let mut total = 0.0;
                        for j in 0..n {
                            let mut best = f64::NEG_INFINITY;
                            for v in 0..symbols {
                                best = best.max(vectors[[c, v, j]]);
                            }
                            total += best;
                        }
                        total
                    })
                    .collect()
            }
        }
    }

    fn raw_score(&self, class: usize, symbols: &[usize]) -> f64 {
        let mut total = 0.0;
        match self {
            Representation::Fcam(full) => {
                for (i, &u) in symbols.iter().enumerate() {
                    for (j, &v) in symbols.iter().enumerate() {
                        total += full[[class, u, v, i, j]];
                    }
                }
            }
            Representation::Ccam { column_means: vectors, .. } | Representation::Gtm(vectors) => {
                for (j, &v) in symbols.iter().enumerate() {
                    total += vectors[[class, v, j]];
                }
            }
        }
        total
    }
}

/// `out[c][v][i][j] = sum over u of full[c][u][v][i][j]`, summed in `u` order.
fn reduce_from_symbol(full: &Array5<f64>) -> Array4<f64> {
    let (classes, symbols, _, n, _) = full.dim();
    let mut out = Array4::<f64>::zeros((classes, symbols, n, n));
    for c in 0..classes {
        for u in 0..symbols {
            for v in 0..symbols {
                for i in 0..n {
                    for j in 0..n {
                        out[[c, v, i, j]] += full[[c, u, v, i, j]];
                    }
                }
            }
        }
    }
    out
}

/// Collapses the from-position axis of `[c][v][i][j]` into `[c][v][j]`.
fn reduce_from_position(ccam: &Array4<f64>, reduce: VectorReduce) -> Array3<f64> {
    let (classes, symbols, n, _) = ccam.dim();
    let mut out = Array3::<f64>::zeros((classes, symbols, n));
    let mut column = vec![0.0; n];
    for c in 0..classes {
        for v in 0..symbols {
            for j in 0..n {
                for (i, slot) in column.iter_mut().enumerate() {
                    *slot = ccam[[c, v, i, j]];
                }
                out[[c, v, j]] = match reduce {
                    VectorReduce::Max => column.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    VectorReduce::Median => median(&column),
                    VectorReduce::Avg => {
                        let mut sum = 0.0;
                        for value in &column {
                            sum += value;
                        }
                        sum / n as f64
                    }
                };
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
struct Accumulator {
    sums: Array5<f64>,
    /// Contribution counts per cell, only kept for the relative average.
    counts: Option<Array5<u32>>,
    /// Entries strictly below this are skipped.
    cutoff: Option<f64>,
    penalty: Option<PenaltyFactors>,
}

/// Per-class constants of the penalty update. `scale` is `alpha * (|C| + 1)`.
#[derive(Debug, Clone, PartialEq)]
enum PenaltyFactors {
    Counting { scale: f64, class_counts: Vec<f64> },
    Entropy { scale: f64, entropies: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
struct Finalized {
    representation: Representation,
    max_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum State {
    Accumulating(Accumulator),
    Finalized(Finalized),
}

/// A per-class coherence store. Samples are added while accumulating;
/// [`GcrModel::finalize`] fixes the representation and enables
/// classification.
#[derive(Debug, Clone, PartialEq)]
pub struct GcrModel {
    variant: GcrVariant,
    symbol_count: usize,
    n: usize,
    classes: Vec<Label>,
    class_counts: Vec<usize>,
    state: State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: Label,
    #[serde(with = "neg_inf_as_null")]
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipResult {
    /// One entry per model class, ascending by class.
    pub scores: Vec<ClassScore>,
    pub predicted: Label,
    /// Highest membership score.
    #[serde(with = "neg_inf_as_null")]
    pub certainty: f64,
    /// Gap between the two highest scores when both are finite.
    pub margin: Option<f64>,
}

impl GcrModel {
    /// Starts an empty store.
    ///
    /// `class_counts` lists the number of train samples per class and
    /// `lama_mean` is the mean over all entries of all train LAMAs; both are
    /// needed up front by the penalty and threshold variants.
    pub fn new(
        variant: GcrVariant,
        symbol_count: usize,
        n: usize,
        class_counts: &BTreeMap<Label, usize>,
        lama_mean: f64,
    ) -> Result<Self, GcrError> {
        variant.validate()?;
        if class_counts.is_empty() || class_counts.values().any(|&k| k == 0) {
            return Err(GcrError::EmptyTrain);
        }
        if symbol_count == 0 || n == 0 {
            return Err(GcrError::InvalidVariant("store needs at least one symbol and one position".into()));
        }
        let classes: Vec<Label> = class_counts.keys().copied().collect();
        let counts: Vec<usize> = class_counts.values().copied().collect();
        let total: usize = counts.iter().sum();
        let rewarded = (classes.len() + 1) as f64;
        let penalty = match variant.penalty {
            None => None,
            Some(Penalty::Counting { alpha }) => Some(PenaltyFactors::Counting {
                scale: alpha * rewarded,
                class_counts: counts.iter().map(|&k| k as f64).collect(),
            }),
            Some(Penalty::Entropy { alpha, floor }) => {
                let mut entropies = Vec::with_capacity(counts.len());
                for (&class, &k) in classes.iter().zip(&counts) {
                    let e = k as f64 / total as f64;
                    let h = (-(e * e.ln())).max(floor);
                    if h <= 0.0 {
                        return Err(GcrError::EntropyDegenerate { class });
                    }
                    entropies.push(h);
                }
                Some(PenaltyFactors::Entropy {
                    scale: alpha * rewarded,
                    entropies,
                })
            }
        };
        let shape = (classes.len(), symbol_count, symbol_count, n, n);
        let accumulator = Accumulator {
            sums: Array5::zeros(shape),
            counts: (variant.gsa == Gsa::RelativeAverage).then(|| Array5::zeros(shape)),
            cutoff: variant.threshold_factor.map(|f| f * lama_mean),
            penalty,
        };
        Ok(Self {
            variant,
            symbol_count,
            n,
            classes,
            class_counts: counts,
            state: State::Accumulating(accumulator),
        })
    }

    pub(crate) fn from_parts(
        variant: GcrVariant,
        symbol_count: usize,
        n: usize,
        classes: Vec<Label>,
        class_counts: Vec<usize>,
        representation: Representation,
    ) -> Self {
        let max_scores = representation.max_scores();
        Self {
            variant,
            symbol_count,
            n,
            classes,
            class_counts,
            state: State::Finalized(Finalized {
                representation,
                max_scores,
            }),
        }
    }

    pub fn variant(&self) -> &GcrVariant {
        &self.variant
    }

    pub fn symbol_count(&self) -> usize {
        self.symbol_count
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Model classes in ascending order.
    pub fn classes(&self) -> &[Label] {
        &self.classes
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn is_finalized(&self) -> bool {
        matches!(self.state, State::Finalized(_))
    }

    pub fn representation(&self) -> Result<&Representation, GcrError> {
        match &self.state {
            State::Finalized(f) => Ok(&f.representation),
            State::Accumulating(_) => Err(GcrError::UnfinalizedModel),
        }
    }

    /// Per-class maximum reachable sums, aligned with [`GcrModel::classes`].
    pub fn max_scores(&self) -> Result<&[f64], GcrError> {
        match &self.state {
            State::Finalized(f) => Ok(&f.max_scores),
            State::Accumulating(_) => Err(GcrError::UnfinalizedModel),
        }
    }

    pub fn class_index(&self, class: Label) -> Result<usize, GcrError> {
        self.classes
            .binary_search(&class)
            .map_err(|_| GcrError::UnknownClass(class))
    }

    fn check_symbols(&self, symbols: &[usize]) -> Result<(), GcrError> {
        if symbols.len() != self.n {
            return Err(GcrError::LengthMismatch {
                expected: self.n,
                found: symbols.len(),
            });
        }
        match symbols.iter().find(|&&s| s >= self.symbol_count) {
            Some(&symbol) => Err(GcrError::VocabularyMismatch {
                symbol,
                symbol_count: self.symbol_count,
            }),
            None => Ok(()),
        }
    }

    /// Routes every LAMA entry `(i, j)` of one train sample to the cell
    /// `(x[i], x[j], i, j)` of its class.
    pub fn add_sample(&mut self, series: &SymbolizedSeries, lama: &Array2<f64>) -> Result<(), GcrError> {
        let class = self.class_index(series.label)?;
        self.check_symbols(&series.symbols)?;
        if lama.dim() != (self.n, self.n) {
            return Err(GcrError::LengthMismatch {
                expected: self.n,
                found: lama.nrows(),
            });
        }
        let class_total = self.classes.len();
        let acc = match &mut self.state {
            State::Accumulating(acc) => acc,
            State::Finalized(_) => return Err(GcrError::AlreadyFinalized),
        };
        let x = &series.symbols;
        for i in 0..self.n {
            for j in 0..self.n {
                let a = lama[[i, j]];
                if acc.cutoff.is_some_and(|cut| a < cut) {
                    continue;
                }
                let (u, v) = (x[i], x[j]);
                match &acc.penalty {
                    None => {
                        acc.sums[[class, u, v, i, j]] += a;
                        if let Some(counts) = &mut acc.counts {
                            counts[[class, u, v, i, j]] += 1;
                        }
                    }
                    Some(factors) => {
                        let (reward, sub) = match factors {
                            PenaltyFactors::Counting { scale, class_counts } => {
                                let sub = a / class_counts[class];
                                (scale * sub, sub)
                            }
                            PenaltyFactors::Entropy { scale, entropies } => {
                                let h = entropies[class];
                                (scale * a / h, a * h)
                            }
                        };
                        acc.sums[[class, u, v, i, j]] += reward;
                        for d in (0..class_total).filter(|&d| d != class) {
                            acc.sums[[d, u, v, i, j]] -= sub;
                        }
                        if let Some(counts) = &mut acc.counts {
                            for d in 0..class_total {
                                counts[[d, u, v, i, j]] += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies the relative average, derives the configured shape and
    /// precomputes per-class maximum scores. Idempotent.
    pub fn finalize(&mut self) {
        let acc = match &mut self.state {
            State::Accumulating(acc) => acc,
            State::Finalized(_) => return,
        };
        let mut full = std::mem::replace(&mut acc.sums, Array5::zeros((0, 0, 0, 0, 0)));
        if let Some(counts) = &acc.counts {
            full.zip_mut_with(counts, |cell, &k| {
                *cell = if k > 0 { *cell / k as f64 } else { 0.0 };
            });
        }
        let representation = Representation::derive(full, self.variant.shape);
        let max_scores = representation.max_scores();
        self.state = State::Finalized(Finalized {
            representation,
            max_scores,
        });
    }

    /// Membership scores of one symbolized input for every class.
    pub fn classify(&self, symbols: &[usize]) -> Result<MembershipResult, GcrError> {
        let finalized = match &self.state {
            State::Finalized(f) => f,
            State::Accumulating(_) => return Err(GcrError::UnfinalizedModel),
        };
        self.check_symbols(symbols)?;
        let scores: Vec<ClassScore> = self
            .classes
            .iter()
            .enumerate()
            .map(|(c, &class)| {
                let max = finalized.max_scores[c];
                let score = if max > SCORE_FLOOR {
                    finalized.representation.raw_score(c, symbols) / max
                } else {
                    f64::NEG_INFINITY
                };
                ClassScore { class, score }
            })
            .collect();
        let mut best = 0;
        for (k, s) in scores.iter().enumerate() {
            if s.score > scores[best].score {
                best = k;
            }
        }
        let certainty = scores[best].score;
        let runner_up = scores
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != best)
            .map(|(_, s)| s.score)
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = (certainty.is_finite() && runner_up.is_finite()).then(|| certainty - runner_up);
        Ok(MembershipResult {
            predicted: scores[best].class,
            scores,
            certainty,
            margin,
        })
    }
}

/// Builds and finalizes a store from labelled train samples.
pub fn build(samples: &[TrainSample<'_>], variant: GcrVariant, symbol_count: usize) -> Result<GcrModel, GcrError> {
    let first = samples.first().ok_or(GcrError::EmptyTrain)?;
    let n = first.series.len();
    let mut class_counts = BTreeMap::new();
    let mut total = 0.0;
    let mut entries = 0usize;
    for s in samples {
        *class_counts.entry(s.series.label).or_insert(0) += 1;
        for &a in s.lama.iter() {
            total += a;
        }
        entries += s.lama.len();
    }
    let lama_mean = if entries > 0 { total / entries as f64 } else { 0.0 };
    let mut model = GcrModel::new(variant, symbol_count, n, &class_counts, lama_mean)?;
    for s in samples {
        model.add_sample(s.series, s.lama)?;
    }
    model.finalize();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn series(label: Label, symbols: Vec<usize>) -> SymbolizedSeries {
        SymbolizedSeries {
            id: "s".into(),
            label,
            values: symbols.iter().map(|&s| s as f64).collect(),
            symbols,
        }
    }

    fn fcam(model: &GcrModel) -> &Array5<f64> {
        match model.representation().unwrap() {
            Representation::Fcam(f) => f,
            _ => panic!("not an FCAM"),
        }
    }

    #[test]
    fn routes_entries_by_symbol_pair() {
        let x = series(0, vec![0, 1]);
        let lama = array![[1.0, 2.0], [3.0, 4.0]];
        let model = build(&[TrainSample { series: &x, lama: &lama }], GcrVariant::new(Shape::Fcam, Gsa::Sum), 2).unwrap();
        let f = fcam(&model);
        assert_eq!(f[[0, 0, 0, 0, 0]], 1.0);
        assert_eq!(f[[0, 0, 1, 0, 1]], 2.0);
        assert_eq!(f[[0, 1, 0, 1, 0]], 3.0);
        assert_eq!(f[[0, 1, 1, 1, 1]], 4.0);
        assert_eq!(f.sum(), 10.0);
    }

    #[test]
    fn relative_average_of_duplicates() {
        let x = series(0, vec![1, 0, 1]);
        let lama = array![[0.2, 0.3, 0.5], [0.1, 0.1, 0.8], [0.6, 0.2, 0.2]];
        let one = build(&[TrainSample { series: &x, lama: &lama }], GcrVariant::new(Shape::Fcam, Gsa::RelativeAverage), 2)
            .unwrap();
        let two = build(
            &[TrainSample { series: &x, lama: &lama }, TrainSample { series: &x, lama: &lama }],
            GcrVariant::new(Shape::Fcam, Gsa::RelativeAverage),
            2,
        )
        .unwrap();
        assert_eq!(fcam(&one), fcam(&two));
    }

    #[test]
    fn gtm_lookup_example() {
        let g = Array3::from_shape_vec((1, 2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let model = GcrModel::from_parts(
            GcrVariant::new(Shape::Gtm(VectorReduce::Avg), Gsa::Sum),
            2,
            2,
            vec![7],
            vec![1],
            Representation::Gtm(g),
        );
        assert_eq!(model.classify(&[0, 1]).unwrap().scores[0].score, 1.0);
        assert_eq!(model.classify(&[1, 0]).unwrap().scores[0].score, 0.0);
        assert_eq!(model.classify(&[1, 0]).unwrap().predicted, 7);
    }

    #[test]
    fn unfinalized_and_vocabulary_errors() {
        let counts = BTreeMap::from([(0, 1)]);
        let mut model = GcrModel::new(GcrVariant::new(Shape::Fcam, Gsa::Sum), 2, 2, &counts, 0.5).unwrap();
        assert_eq!(model.classify(&[0, 0]), Err(GcrError::UnfinalizedModel));
        assert_eq!(
            model.add_sample(&series(3, vec![0, 0]), &Array2::eye(2)),
            Err(GcrError::UnknownClass(3))
        );
        model.add_sample(&series(0, vec![0, 1]), &Array2::eye(2)).unwrap();
        model.finalize();
        assert!(matches!(model.classify(&[0, 2]), Err(GcrError::VocabularyMismatch { .. })));
        assert!(matches!(model.classify(&[0]), Err(GcrError::LengthMismatch { .. })));
        assert_eq!(
            model.add_sample(&series(0, vec![0, 1]), &Array2::eye(2)),
            Err(GcrError::AlreadyFinalized)
        );
    }

    #[test]
    fn counting_penalty_single_class() {
        let x = series(0, vec![0]);
        let lama = array![[0.5]];
        let variant = GcrVariant::new(Shape::Fcam, Gsa::Sum).with_penalty(Penalty::Counting { alpha: 1.0 });
        let samples = [TrainSample { series: &x, lama: &lama }, TrainSample { series: &x, lama: &lama }];
        let model = build(&samples, variant, 1).unwrap();
        // two samples, each adds 2 * 0.5 / 2
        assert_eq!(fcam(&model)[[0, 0, 0, 0, 0]], 1.0);
    }

    #[test]
    fn entropy_penalty_balanced_classes() {
        let a = series(0, vec![0]);
        let b = series(1, vec![0]);
        let lama = array![[1.0]];
        let variant = GcrVariant::new(Shape::Fcam, Gsa::Sum).with_penalty(Penalty::Entropy { alpha: 1.0, floor: 0.0 });
        let model = build(&[TrainSample { series: &a, lama: &lama }, TrainSample { series: &b, lama: &lama }], variant, 1).unwrap();
        let h = 0.5 * 2f64.ln();
        let expected = 3.0 / h - h;
        assert!((fcam(&model)[[0, 0, 0, 0, 0]] - expected).abs() < 1e-12);
        assert!((fcam(&model)[[1, 0, 0, 0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn entropy_degenerate_without_floor() {
        let variant = GcrVariant::new(Shape::Fcam, Gsa::Sum).with_penalty(Penalty::Entropy { alpha: 1.0, floor: 0.0 });
        let counts = BTreeMap::from([(4, 3)]);
        assert_eq!(
            GcrModel::new(variant, 2, 2, &counts, 1.0),
            Err(GcrError::EntropyDegenerate { class: 4 })
        );
        let guarded = GcrVariant::new(Shape::Fcam, Gsa::Sum).with_penalty(Penalty::Entropy { alpha: 1.0, floor: 1e-12 });
        assert!(GcrModel::new(guarded, 2, 2, &counts, 1.0).is_ok());
    }

    #[test]
    fn ties_go_to_lowest_class() {
        let a = series(2, vec![0, 0]);
        let b = series(5, vec![0, 0]);
        let lama = Array2::from_elem((2, 2), 0.5);
        let model = build(
            &[TrainSample { series: &b, lama: &lama }, TrainSample { series: &a, lama: &lama }],
            GcrVariant::new(Shape::Gtm(VectorReduce::Max), Gsa::Sum),
            2,
        )
        .unwrap();
        let r = model.classify(&[0, 0]).unwrap();
        assert_eq!(r.predicted, 2);
        assert_eq!(r.certainty, 1.0);
        assert_eq!(r.margin, Some(0.0));
    }

    #[test]
    fn zero_store_is_unelectable() {
        let x = series(0, vec![0, 0]);
        let lama = Array2::zeros((2, 2));
        let model = build(&[TrainSample { series: &x, lama: &lama }], GcrVariant::new(Shape::Ccam, Gsa::Sum), 2).unwrap();
        let r = model.classify(&[0, 1]).unwrap();
        assert_eq!(r.certainty, f64::NEG_INFINITY);
        assert_eq!(r.predicted, 0);
        assert_eq!(r.margin, None);
    }
}
