//! Steps shared by the CLI, the pipeline and the service: loading data,
//! symbolizing it and obtaining one attention stack per sample.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use tsattn_core::attention::bundle::Bundle;
use tsattn_core::attention::{aggregate_lama, forward_attention, MhaWeights};
use tsattn_core::dataset::{Label, Split};
use tsattn_core::fixtures;
use tsattn_core::gcr::MembershipResult;
use tsattn_core::{AttentionStack, ComboTag, Lama, RawDataset, SaxCodec, SymbolizedSeries};

use crate::config::{AttentionSource, DataSource, WeightInit};
use crate::error::Failure;

pub fn load_dataset(source: &DataSource, seed: u64) -> Result<RawDataset, Failure> {
    Ok(match source {
        DataSource::Files { train, test } => RawDataset::load(train, test.as_deref())?,
        DataSource::Fixture { fixture } => fixtures::generate(fixture, seed)?,
    })
}

/// Fits the codec on the train split and symbolizes every sample in
/// dataset order.
pub fn symbolize(dataset: &RawDataset, symbol_count: usize) -> Result<(SaxCodec, Vec<SymbolizedSeries>), Failure> {
    let train: Vec<&[f64]> = dataset.split(Split::Train).map(|s| s.values.as_slice()).collect();
    let codec = SaxCodec::fit(&train, symbol_count)?;
    let series = dataset
        .samples()
        .iter()
        .map(|s| codec.transform(s.id.clone(), s.label, &s.values))
        .collect::<Result<_, _>>()?;
    Ok((codec, series))
}

pub fn weights(source: &AttentionSource, seed: u64) -> Option<MhaWeights> {
    match source {
        AttentionSource::Bundle { .. } => None,
        AttentionSource::Forward {
            layers,
            heads,
            d_model,
            d_k,
            init,
            ..
        } => Some(match init {
            WeightInit::Zero => MhaWeights::zeros(*layers, *heads, *d_model, *d_k),
            WeightInit::Random { scale } => MhaWeights::random(*layers, *heads, *d_model, *d_k, *scale, seed),
        }),
    }
}

pub fn forward_stacks(series: &[SymbolizedSeries], weights: &MhaWeights, use_pe: bool) -> Result<Vec<AttentionStack>, Failure> {
    series
        .par_iter()
        .map(|x| forward_attention(x, weights, use_pe).map_err(Failure::from))
        .collect()
}

/// Picks the stack of every series from a bundle by sample id.
pub fn align_bundle(bundle: Bundle, series: &[SymbolizedSeries]) -> Result<Vec<AttentionStack>, Failure> {
    let mut by_id: HashMap<String, AttentionStack> = bundle
        .stacks
        .into_iter()
        .map(|s| (s.sample_id().to_string(), s))
        .collect();
    series
        .iter()
        .map(|x| {
            let stack = by_id.remove(&x.id).ok_or_else(|| Failure::MissingStack(x.id.clone()))?;
            if stack.n() != x.len() {
                return Err(Failure::Invalid(format!(
                    "stack {} has n = {}, series has {}",
                    x.id,
                    stack.n(),
                    x.len()
                )));
            }
            Ok(stack)
        })
        .collect()
}

pub fn stacks_for(series: &[SymbolizedSeries], source: &AttentionSource, seed: u64) -> Result<Vec<AttentionStack>, Failure> {
    match source {
        AttentionSource::Bundle { path } => align_bundle(Bundle::read(path)?, series),
        AttentionSource::Forward { use_pe, .. } => {
            let w = weights(source, seed).expect("forward source has weights");
            forward_stacks(series, &w, *use_pe)
        }
    }
}

pub fn lamas(stacks: &[AttentionStack], combo: ComboTag) -> Vec<Lama> {
    stacks.par_iter().map(|s| aggregate_lama(s, combo)).collect()
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    sample_id: String,
    predicted: Label,
}

/// Reads `sample_id,predicted` rows; other columns are ignored.
pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, Label>, Failure> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for row in reader.deserialize::<PredictionRow>() {
        let row = row?;
        out.insert(row.sample_id, row.predicted);
    }
    Ok(out)
}

/// Predictions CSV: `sample_id,gold,predicted,certainty`.
pub fn predictions_csv(rows: &[(&SymbolizedSeries, &MembershipResult)]) -> Result<String, Failure> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["sample_id", "gold", "predicted", "certainty"])?;
    for (x, r) in rows {
        let certainty = if r.certainty.is_finite() {
            r.certainty.to_string()
        } else {
            String::new()
        };
        writer.write_record([x.id.clone(), x.label.to_string(), r.predicted.to_string(), certainty])?;
    }
    let bytes = writer.into_inner().map_err(|e| Failure::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
