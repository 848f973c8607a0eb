//! Batch run: symbolize, ingest attention, aggregate, abstract, build and
//! evaluate coherence representations, write reports.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! codec.json
//! lasa/{combo}/{thresholds}.jsonl            one abstraction record per sample
//! lasa/{combo}/{thresholds}.validation.csv   interpolated series with masks
//! gcr/{combo}/{variant}.json + .bin          stores (when export_stores)
//! heatmaps/{combo}/{variant}/class-{c}.json
//! predictions/{combo}/{variant}.csv
//! report.json
//! ```
//!
//! Every file is a pure function of the config, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tsattn_core::attention::aggregate_lava;
use tsattn_core::dataset::{Label, Split};
use tsattn_core::gcr::{self, build, certainty_curve, CertaintyPoint, GcrModel, GcrVariant, TrainSample};
use tsattn_core::lasa::{self, abstract_with, interpolate, reduction_stats, Abstraction, ValidationSeries};
use tsattn_core::metrics::{complexity_report, model_fidelity, ComplexityReport};
use tsattn_core::stats::MeanStd;
use tsattn_core::{ComboTag, Lama, MembershipResult, SaxCodec, SymbolizedSeries, ThresholdSpec};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{AtStage, Failure, PipelineError, Stage};
use crate::prepare;

pub const REPORT_SCHEMA: &str = "tsattn.report/v1";
pub const ABSTRACTION_SCHEMA: &str = "tsattn.abstraction/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Samples on which the measure was defined.
    pub defined: usize,
}

impl MetricSummary {
    fn of(values: &[f64]) -> Self {
        let ms = MeanStd::of(values);
        Self {
            mean: ms.map(|m| m.mean),
            std: ms.map(|m| m.std),
            defined: values.len(),
        }
    }
}

pub type ComplexitySummary = BTreeMap<String, MetricSummary>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LasaSummary {
    pub samples: usize,
    pub reduction: MeanStd,
    pub complexity: ComplexitySummary,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcrSummary {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub certainty_curve: Vec<CertaintyPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub store: Option<String>,
    pub predictions: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub n: usize,
    pub classes: Vec<Label>,
    pub split_sizes: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub accuracy: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub seed: u64,
    pub symbol_count: usize,
    pub dataset: DatasetSummary,
    pub codec: SaxCodec,
    pub completed_stages: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureSummary>,
    /// Complexity of the symbolized, unabstracted series.
    pub original_complexity: ComplexitySummary,
    /// `lava combo -> threshold label -> summary`
    pub lasa: BTreeMap<String, BTreeMap<String, LasaSummary>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSummary>,
    /// `lama combo -> variant -> summary`
    pub gcr: BTreeMap<String, BTreeMap<String, GcrSummary>>,
}

/// One line of an abstraction export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionRecord {
    pub schema: String,
    pub sample_id: String,
    pub label: Label,
    pub split: Split,
    pub combo: ComboTag,
    pub t1: f64,
    #[serde(with = "lasa::neg_inf_as_null")]
    pub t2: f64,
    /// `[position, value]` pairs.
    pub kept: Vec<(usize, f64)>,
    pub reduction: f64,
    pub complexity: Option<ComplexityReport>,
}

/// Complexity of a kept-value sequence; `None` when it is too short.
pub fn abstraction_complexity(a: &Abstraction) -> Option<ComplexityReport> {
    let values: Vec<f64> = a.kept.iter().map(|k| k.value).collect();
    complexity_report(&values, a.reduction).ok()
}

fn summarize_complexity(reports: &[Option<ComplexityReport>]) -> ComplexitySummary {
    let collect = |f: fn(&ComplexityReport) -> Option<f64>| -> Vec<f64> { reports.iter().flatten().filter_map(f).collect() };
    let mut out = BTreeMap::new();
    out.insert("ce".into(), MetricSummary::of(&collect(|r| Some(r.ce))));
    out.insert("svden".into(), MetricSummary::of(&collect(|r| Some(r.svden))));
    out.insert("apen".into(), MetricSummary::of(&collect(|r| Some(r.apen))));
    out.insert("sampen".into(), MetricSummary::of(&collect(|r| r.sampen)));
    out.insert("trend_shifts".into(), MetricSummary::of(&collect(|r| Some(r.trend_shifts as f64))));
    out
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(dir.to_path_buf(), e))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn json_pretty<T: Serialize>(value: &T) -> Result<String, Failure> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn validation_csv(rows: &[(&SymbolizedSeries, ValidationSeries)]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "position", "value", "mask"])?;
    for (x, v) in rows {
        for (p, (value, mask)) in v.values.iter().zip(&v.mask).enumerate() {
            w.write_record([x.id.clone(), p.to_string(), value.to_string(), u8::from(*mask).to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

/// Abstracts every sample under one LAVA combo and threshold set.
fn run_lasa(
    out: &Path,
    series: &[SymbolizedSeries],
    splits: &[Split],
    lamas: &[Lama],
    lava_combo: ComboTag,
    spec: &ThresholdSpec,
) -> Result<LasaSummary, Failure> {
    let step3 = lava_combo.step3.expect("lava combo carries step3");
    let abstractions: Vec<Abstraction> = series
        .par_iter()
        .zip(lamas)
        .map(|(x, lama)| abstract_with(x, &aggregate_lava(lama, step3), spec))
        .collect::<Result<_, _>>()?;
    let complexity: Vec<Option<ComplexityReport>> = abstractions.par_iter().map(abstraction_complexity).collect();

    let mut lines = String::new();
    for (((x, split), a), c) in series.iter().zip(splits).zip(&abstractions).zip(&complexity) {
        let record = AbstractionRecord {
            schema: ABSTRACTION_SCHEMA.into(),
            sample_id: x.id.clone(),
            label: x.label,
            split: *split,
            combo: lava_combo,
            t1: a.thresholds.t1,
            t2: a.thresholds.t2,
            kept: a.kept.iter().map(|k| (k.position, k.value)).collect(),
            reduction: a.reduction,
            complexity: c.clone(),
        };
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    let base = format!("lasa/{lava_combo}/{}", spec.label());
    write(&out.join(format!("{base}.jsonl")), lines)?;
    let validation: Vec<(&SymbolizedSeries, ValidationSeries)> = series
        .iter()
        .zip(&abstractions)
        .map(|(x, a)| (x, interpolate(a, x.len())))
        .collect();
    write(&out.join(format!("{base}.validation.csv")), validation_csv(&validation)?)?;

    Ok(LasaSummary {
        samples: abstractions.len(),
        reduction: reduction_stats(&abstractions)?,
        complexity: summarize_complexity(&complexity),
        file: format!("{base}.jsonl"),
    })
}

struct Built {
    variant: GcrVariant,
    model: GcrModel,
}

fn build_all(
    series: &[SymbolizedSeries],
    splits: &[Split],
    lamas: &[Lama],
    variants: &[GcrVariant],
    symbol_count: usize,
) -> Result<Vec<Built>, Failure> {
    let train: Vec<TrainSample<'_>> = series
        .iter()
        .zip(splits)
        .zip(lamas)
        .filter(|((_, s), _)| **s == Split::Train)
        .map(|((x, _), lama)| TrainSample { series: x, lama: &lama.matrix })
        .collect();
    variants
        .par_iter()
        .map(|&variant| {
            Ok(Built {
                variant,
                model: build(&train, variant, symbol_count)?,
            })
        })
        .collect()
}

fn mark(report: &mut Report, stage: Stage) {
    report.completed_stages.push(stage.as_str().into());
}

/// Writes the report (also on failure) and returns it.
fn finish(out: &Path, mut report: Report, failure: Option<PipelineError>) -> Result<Report, PipelineError> {
    if let Some(err) = &failure {
        report.failure = Some(FailureSummary {
            stage: err.stage.as_str().into(),
            error: err.failure.to_string(),
        });
    }
    write(&out.join("report.json"), json_pretty(&report).at(Stage::Report)?).at(Stage::Report)?;
    match failure {
        Some(err) => Err(err),
        None => Ok(report),
    }
}

pub fn run(config: &ExperimentConfig) -> Result<Report, PipelineError> {
    config.validate().at(Stage::Config)?;
    let out = config.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Failure::Io(out.clone(), e)).at(Stage::Config)?;

    let dataset = prepare::load_dataset(&config.data, config.seed).at(Stage::Dataset)?;
    let (codec, series) = prepare::symbolize(&dataset, config.symbol_count).at(Stage::Symbolize)?;
    write(&out.join("codec.json"), json_pretty(&codec).at(Stage::Symbolize)?).at(Stage::Symbolize)?;
    let splits: Vec<Split> = dataset.samples().iter().map(|s| s.split).collect();

    let mut split_sizes = BTreeMap::new();
    for s in &splits {
        *split_sizes.entry(s.as_str().to_string()).or_insert(0) += 1;
    }
    let source = match &config.data {
        DataSource::Files { .. } => "files".to_string(),
        DataSource::Fixture { fixture } => format!("fixture:{}", fixture.name()),
    };
    let original: Vec<Option<ComplexityReport>> = series.par_iter().map(|x| complexity_report(&x.values, 0.0).ok()).collect();
    let mut report = Report {
        schema: REPORT_SCHEMA.into(),
        seed: config.seed,
        symbol_count: config.symbol_count,
        dataset: DatasetSummary {
            source,
            n: dataset.n(),
            classes: dataset.classes().to_vec(),
            split_sizes,
        },
        codec,
        completed_stages: Vec::new(),
        failure: None,
        original_complexity: summarize_complexity(&original),
        lasa: BTreeMap::new(),
        baseline: None,
        gcr: BTreeMap::new(),
    };
    mark(&mut report, Stage::Config);
    mark(&mut report, Stage::Dataset);
    mark(&mut report, Stage::Symbolize);

    let stacks = match prepare::stacks_for(&series, &config.attention, config.seed).at(Stage::Attention) {
        Ok(s) => s,
        Err(e) => return finish(&out, report, Some(e)),
    };
    mark(&mut report, Stage::Attention);
    let lamas: Vec<(ComboTag, Vec<Lama>)> = config.combos.iter().map(|&c| (c, prepare::lamas(&stacks, c))).collect();
    mark(&mut report, Stage::Aggregate);

    for (combo, combo_lamas) in &lamas {
        for &step3 in &config.lava_steps {
            let lava_combo = combo.with_step3(step3);
            for spec in &config.lasa_thresholds {
                match run_lasa(&out, &series, &splits, combo_lamas, lava_combo, spec).at(Stage::Lasa) {
                    Ok(summary) => {
                        report
                            .lasa
                            .entry(lava_combo.to_string())
                            .or_default()
                            .insert(spec.label(), summary);
                    }
                    Err(e) => return finish(&out, report, Some(e)),
                }
            }
        }
    }
    mark(&mut report, Stage::Lasa);

    let mut built = Vec::new();
    for (combo, combo_lamas) in &lamas {
        let models = match build_all(&series, &splits, combo_lamas, &config.gcr_variants, config.symbol_count).at(Stage::GcrBuild) {
            Ok(m) => m,
            Err(e) => return finish(&out, report, Some(e)),
        };
        if let Err(e) = export_models(&out, config, *combo, &models).at(Stage::GcrBuild) {
            return finish(&out, report, Some(e));
        }
        built.push((*combo, models));
    }
    mark(&mut report, Stage::GcrBuild);

    let test: Vec<&SymbolizedSeries> = series
        .iter()
        .zip(&splits)
        .filter(|(_, s)| **s == Split::Test)
        .map(|(x, _)| x)
        .collect();
    if test.is_empty() {
        let err = PipelineError {
            stage: Stage::Classify,
            failure: Failure::EmptyBatch("test split has no samples".into()),
        };
        return finish(&out, report, Some(err));
    }
    let gold: Vec<Label> = test.iter().map(|x| x.label).collect();
    let baseline = match &config.baseline_predictions {
        None => None,
        Some(path) => match baseline_for(path, &test) {
            Ok(b) => Some(b),
            Err(e) => return finish(&out, report, Some(PipelineError { stage: Stage::Classify, failure: e })),
        },
    };
    if let Some(b) = &baseline {
        let correct = b.iter().zip(&gold).filter(|(p, g)| p == g).count();
        report.baseline = Some(BaselineSummary {
            accuracy: correct as f64 / gold.len() as f64,
            samples: gold.len(),
        });
    }

    for (combo, models) in &built {
        let evaluated: Result<Vec<(String, GcrSummary)>, Failure> = models
            .par_iter()
            .map(|b| {
                let results: Vec<MembershipResult> = test
                    .iter()
                    .map(|x| b.model.classify(&x.symbols))
                    .collect::<Result<_, _>>()?;
                evaluate(&out, config, *combo, b, &test, &gold, &results, baseline.as_deref(), report.baseline.as_ref())
            })
            .collect();
        match evaluated.at(Stage::Classify) {
            Ok(rows) => {
                report.gcr.insert(combo.to_string(), rows.into_iter().collect());
            }
            Err(e) => return finish(&out, report, Some(e)),
        }
    }
    mark(&mut report, Stage::Classify);
    mark(&mut report, Stage::Metrics);
    mark(&mut report, Stage::Report);
    finish(&out, report, None)
}

fn export_models(out: &Path, config: &ExperimentConfig, combo: ComboTag, models: &[Built]) -> Result<(), Failure> {
    for b in models {
        if config.export_stores {
            let path = out.join(format!("gcr/{combo}/{}.json", b.variant));
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| Failure::Io(dir.to_path_buf(), e))?;
            }
            b.model.write_store(&path, Some(combo))?;
        }
        if config.heatmap_variants.contains(&b.variant) {
            for &class in b.model.classes() {
                let path = heatmap_path(out, combo, &b.variant, class);
                write(&path, gcr::heatmap_json(&b.model, class)?)?;
            }
        }
    }
    Ok(())
}

pub fn heatmap_path(out: &Path, combo: ComboTag, variant: &GcrVariant, class: Label) -> PathBuf {
    out.join(format!("heatmaps/{combo}/{variant}/class-{class}.json"))
}

fn baseline_for(path: &Path, test: &[&SymbolizedSeries]) -> Result<Vec<Label>, Failure> {
    let predictions = prepare::read_predictions(path)?;
    test.iter()
        .map(|x| {
            predictions
                .get(&x.id)
                .copied()
                .ok_or_else(|| Failure::Invalid(format!("baseline predictions lack sample {}", x.id)))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    out: &Path,
    config: &ExperimentConfig,
    combo: ComboTag,
    built: &Built,
    test: &[&SymbolizedSeries],
    gold: &[Label],
    results: &[MembershipResult],
    baseline: Option<&[Label]>,
    baseline_summary: Option<&BaselineSummary>,
) -> Result<(String, GcrSummary), Failure> {
    let correct = results.iter().zip(gold).filter(|(r, g)| r.predicted == **g).count();
    let accuracy = correct as f64 / gold.len() as f64;
    let predicted: Vec<Label> = results.iter().map(|r| r.predicted).collect();
    let fidelity = baseline.map(|b| model_fidelity(&predicted, b)).transpose()?;
    let rows: Vec<(&SymbolizedSeries, &MembershipResult)> = test.iter().copied().zip(results).collect();
    let predictions = format!("predictions/{combo}/{}.csv", built.variant);
    write(&out.join(&predictions), prepare::predictions_csv(&rows)?)?;
    Ok((
        built.variant.to_string(),
        GcrSummary {
            accuracy,
            correct,
            total: gold.len(),
            certainty_curve: certainty_curve(results, gold, &config.certainty_steps)?,
            fidelity,
            accuracy_delta: baseline_summary.map(|b| accuracy - b.accuracy),
            store: config.export_stores.then(|| format!("gcr/{combo}/{}.json", built.variant)),
            predictions,
        },
    ))
}
