use ndarray::{Array2, Array4, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AttentionError, AttentionStack};
use crate::symbolization::SymbolizedSeries;

/// Sinusoidal positional encoding of shape `(n, d_model)`.
pub fn positional_encoding(n: usize, d_model: usize) -> Result<Array2<f64>, AttentionError> {
    if d_model < 2 || d_model % 2 != 0 {
        return Err(AttentionError::OddDimension(d_model));
    }
    let mut pe = Array2::zeros((n, d_model));
    for pos in 0..n {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            pe[[pos, 2 * i]] = angle.sin();
            pe[[pos, 2 * i + 1]] = angle.cos();
        }
    }
    Ok(pe)
}

/// Row-wise `softmax(Q K^T / sqrt(d_k))`.
pub fn attention_matrix(q: ArrayView2<f64>, k: ArrayView2<f64>) -> Result<Array2<f64>, AttentionError> {
    if q.ncols() != k.ncols() || q.ncols() == 0 {
        return Err(AttentionError::DimensionMismatch(format!(
            "query width {} vs key width {}",
            q.ncols(),
            k.ncols()
        )));
    }
    if q.iter().chain(k.iter()).any(|v| !v.is_finite()) {
        return Err(AttentionError::NonFiniteValue);
    }
    let scale = (q.ncols() as f64).sqrt();
    let mut logits = q.dot(&k.t()) / scale;
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    Ok(logits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    /// `d_model x d_k`
    pub query: Array2<f64>,
    /// `d_model x d_k`
    pub key: Array2<f64>,
}

/// Query/key projections of every head in every layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhaWeights {
    pub d_model: usize,
    pub d_k: usize,
    pub layers: Vec<Vec<HeadWeights>>,
}

impl MhaWeights {
    pub fn zeros(layers: usize, heads: usize, d_model: usize, d_k: usize) -> Self {
        let head = HeadWeights {
            query: Array2::zeros((d_model, d_k)),
            key: Array2::zeros((d_model, d_k)),
        };
        Self {
            d_model,
            d_k,
            layers: vec![vec![head; heads]; layers],
        }
    }

    /// Gaussian weights with standard deviation `scale`, seeded.
    pub fn random(layers: usize, heads: usize, d_model: usize, d_k: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let mut draw = || Array2::from_shape_simple_fn((d_model, d_k), || normal.sample(&mut rng));
        let layers = (0..layers)
            .map(|_| {
                (0..heads)
                    .map(|_| HeadWeights {
                        query: draw(),
                        key: draw(),
                    })
                    .collect()
            })
            .collect();
        Self { d_model, d_k, layers }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn head_count(&self) -> usize {
        self.layers.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<(), AttentionError> {
        let heads = self.head_count();
        if self.layers.is_empty() || heads == 0 || self.d_model == 0 || self.d_k == 0 {
            return Err(AttentionError::DimensionMismatch(
                "weights need at least one layer, head and dimension".into(),
            ));
        }
        for layer in &self.layers {
            if layer.len() != heads {
                return Err(AttentionError::DimensionMismatch(
                    "every layer must have the same head count".into(),
                ));
            }
            for head in layer {
                for m in [&head.query, &head.key] {
                    if m.dim() != (self.d_model, self.d_k) {
                        return Err(AttentionError::DimensionMismatch(format!(
                            "projection shape {:?}, expected ({}, {})",
                            m.dim(),
                            self.d_model,
                            self.d_k
                        )));
                    }
                    if m.iter().any(|v| !v.is_finite()) {
                        return Err(AttentionError::NonFiniteValue);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Forward pass producing the attention stack of one symbolized series.
///
/// Each position's mapped value is repeated across all `d_model` columns,
/// optionally plus the positional encoding. The next layer's input is the
/// head-averaged attention-weighted input `mean_h(A_h X)`; no feed-forward
/// or normalization sublayers are applied.
pub fn forward_attention(
    x: &SymbolizedSeries,
    weights: &MhaWeights,
    use_pe: bool,
) -> Result<AttentionStack, AttentionError> {
    weights.validate()?;
    let n = x.values.len();
    if n == 0 {
        return Err(AttentionError::DimensionMismatch("empty series".into()));
    }
    let mut input = Array2::from_shape_fn((n, weights.d_model), |(i, _)| x.values[i]);
    if use_pe {
        input += &positional_encoding(n, weights.d_model)?;
    }
    let (layers, heads) = (weights.layer_count(), weights.head_count());
    let mut tensor = Array4::<f32>::zeros((layers, heads, n, n));
    for (l, layer) in weights.layers.iter().enumerate() {
        let mut next = Array2::<f64>::zeros(input.dim());
        for (h, head) in layer.iter().enumerate() {
            let q = input.dot(&head.query);
            let k = input.dot(&head.key);
            let a = attention_matrix(q.view(), k.view())?;
            next += &a.dot(&input);
            tensor
                .index_axis_mut(Axis(0), l)
                .index_axis_mut(Axis(0), h)
                .assign(&a.mapv(|v| v as f32));
        }
        input = next / heads as f64;
    }
    AttentionStack::new(x.id.clone(), tensor)
}
