//! Command line of the `tsattn` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tsattn_core::attention::bundle::Bundle;
use tsattn_core::attention::{aggregate_lava, MhaWeights};
use tsattn_core::dataset::{read_rows, Split};
use tsattn_core::fixtures::{self, FixtureKind};
use tsattn_core::gcr::{build, heatmap_json, GcrModel, GcrVariant, TrainSample};
use tsattn_core::lasa::abstract_with;
use tsattn_core::metrics::{complexity_report, consistency, model_fidelity, LabeledMatrix};
use tsattn_core::{ComboTag, Label, RawDataset, SaxCodec, SymbolizedSeries, ThresholdSpec};

use crate::config::{AttentionSource, DataSource, ExperimentConfig};
use crate::pipeline::{self, abstraction_complexity, AbstractionRecord, ABSTRACTION_SCHEMA};
use crate::prepare;

#[derive(Debug, Parser)]
#[command(name = "tsattn", version, about = "Attention-based interpretation of symbolized time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Symbolic aggregate approximation.
    #[command(subcommand)]
    Sax(SaxCommand),
    /// Attention bundles.
    #[command(subcommand)]
    Attn(AttnCommand),
    /// Reduce every stack of a bundle to a LAMA.
    Lama {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "hl-ms")]
        combo: ComboTag,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold abstraction of every sample.
    Lasa(LasaArgs),
    /// Global coherence representations.
    #[command(subcommand)]
    Gcr(GcrCommand),
    /// Complexity and explanation measures.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Full batch run.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Synthetic datasets.
    #[command(subcommand)]
    Fixture(FixtureCommand),
    /// HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Label-first CSV/TSV rows.
    #[arg(long, conflicts_with = "fixture")]
    pub train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,
    /// `trend`, `counting` or `counting-binary`.
    #[arg(long)]
    pub fixture: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "symbols", default_value_t = 7)]
    pub symbol_count: usize,
}

impl DataArgs {
    fn source(&self) -> Result<DataSource> {
        Ok(match (&self.train, &self.fixture) {
            (Some(train), None) => DataSource::Files {
                train: train.clone(),
                test: self.test.clone(),
            },
            (None, Some(name)) => DataSource::Fixture {
                fixture: FixtureKind::from_name(name)?,
            },
            _ => bail!("give either --train or --fixture"),
        })
    }

    fn symbolized(&self) -> Result<(RawDataset, SaxCodec, Vec<SymbolizedSeries>)> {
        let dataset = prepare::load_dataset(&self.source()?, self.seed)?;
        let (codec, series) = prepare::symbolize(&dataset, self.symbol_count)?;
        Ok((dataset, codec, series))
    }
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    /// Bundle manifest; without it every attention matrix is uniform.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
}

impl AttnArgs {
    fn source(&self) -> AttentionSource {
        match &self.bundle {
            Some(path) => AttentionSource::Bundle { path: path.clone() },
            None => AttentionSource::uniform(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SaxCommand {
    /// Fit a codec on train rows.
    Fit {
        #[arg(long)]
        train: PathBuf,
        #[arg(long = "symbols", default_value_t = 7)]
        symbol_count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Symbolize rows with a fitted codec; writes JSON lines.
    Transform {
        #[arg(long)]
        codec: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    Zero,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum AttnCommand {
    /// Compute attention stacks from fixed weights and write a bundle.
    Gen {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[arg(long, default_value_t = 1)]
        heads: usize,
        #[arg(long, default_value_t = 8)]
        d_model: usize,
        #[arg(long, default_value_t = 4)]
        d_k: usize,
        #[arg(long, value_enum, default_value_t = InitArg::Random)]
        init: InitArg,
        #[arg(long, default_value_t = 0.5)]
        scale: f64,
        #[arg(long)]
        no_pe: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a bundle and check every stack.
    Validate {
        #[arg(long)]
        bundle: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct LasaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub attn: AttnArgs,
    /// LAVA combo with three steps, e.g. `hl-msm`.
    #[arg(long, default_value = "hl-msm")]
    pub combo: ComboTag,
    #[arg(long, default_value = "avg")]
    pub mode: String,
    #[arg(long, default_value_t = 1.0)]
    pub s1: f64,
    #[arg(long, default_value_t = 1.2, allow_negative_numbers = true)]
    pub s2: f64,
    /// JSON lines output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum GcrCommand {
    /// Build a store from the train split.
    Build {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        attn: AttnArgs,
        #[arg(long, default_value = "hl-ms")]
        combo: ComboTag,
        #[arg(long, default_value = "gtm_avg-sum")]
        variant: GcrVariant,
        /// Store manifest path; the payload and the codec are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify rows with a stored model; writes a predictions CSV.
    Classify {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        codec: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the heatmap JSON of one class.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        class: Label,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum MetricsCommand {
    /// Complexity measures of every row; JSON lines to stdout.
    Complexity {
        #[arg(long)]
        input: PathBuf,
    },
    /// Agreement of two prediction files.
    Fidelity {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Distances between LAMA files written by `lama`, one file per fold.
    Consistency {
        #[arg(long = "fold", required = true, num_args = 1..)]
        folds: Vec<PathBuf>,
        #[arg(long, default_value_t = 3)]
        per_class: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum PipelineCommand {
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum FixtureCommand {
    /// Write the splits of a fixture as TSV files.
    Gen {
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn codec_path(store: &Path) -> PathBuf {
    store.with_extension("codec.json")
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sax(SaxCommand::Fit { train, symbol_count, out }) => {
            let rows = read_rows(&train)?;
            let values: Vec<&[f64]> = rows.iter().map(|(_, v)| v.as_slice()).collect();
            write_json(&out, &SaxCodec::fit(&values, symbol_count)?)
        }
        Command::Sax(SaxCommand::Transform { codec, input, out }) => {
            let codec: SaxCodec = read_json(&codec)?;
            let mut text = String::new();
            for (row, (label, values)) in read_rows(&input)?.into_iter().enumerate() {
                let x = codec.transform(format!("row-{row}"), label, &values)?;
                text.push_str(&serde_json::to_string(&x)?);
                text.push('\n');
            }
            ensure_parent(&out)?;
            Ok(fs::write(&out, text)?)
        }
        Command::Attn(AttnCommand::Gen {
            data,
            layers,
            heads,
            d_model,
            d_k,
            init,
            scale,
            no_pe,
            out,
        }) => {
            let (_, _, series) = data.symbolized()?;
            let weights = match init {
                InitArg::Zero => MhaWeights::zeros(layers, heads, d_model, d_k),
                InitArg::Random => MhaWeights::random(layers, heads, d_model, d_k, scale, data.seed),
            };
            let stacks = prepare::forward_stacks(&series, &weights, !no_pe)?;
            let labels = series.iter().map(|x| x.label).collect();
            ensure_parent(&out)?;
            Bundle::from_stacks(stacks, Some(labels))?.write(&out)?;
            Ok(())
        }
        Command::Attn(AttnCommand::Validate { bundle }) => {
            let b = Bundle::read(&bundle)?;
            println!(
                "{} stacks, {} layers x {} heads, n = {}: ok",
                b.manifest.sample_count, b.manifest.layers, b.manifest.heads, b.manifest.n
            );
            Ok(())
        }
        Command::Lama { bundle, combo, out } => {
            if combo.step3.is_some() {
                bail!("LAMA combos have two steps, got {combo}");
            }
            let b = Bundle::read(&bundle)?;
            let labels = b
                .manifest
                .labels
                .clone()
                .context("bundle has no labels; LAMA records need them")?;
            let records: Vec<LabeledMatrix> = prepare::lamas(&b.stacks, combo)
                .into_iter()
                .zip(labels)
                .map(|(l, label)| LabeledMatrix {
                    sample_id: l.sample_id,
                    label,
                    matrix: l.matrix,
                })
                .collect();
            write_json(&out, &records)
        }
        Command::Lasa(args) => lasa(args),
        Command::Gcr(cmd) => gcr(cmd),
        Command::Metrics(cmd) => metrics(cmd),
        Command::Pipeline(PipelineCommand::Run { config }) => {
            let config = ExperimentConfig::load(&config)?;
            let report = pipeline::run(&config)?;
            println!(
                "wrote {} ({} combos, {} variants)",
                config.output_dir.join("report.json").display(),
                report.gcr.len(),
                config.gcr_variants.len()
            );
            Ok(())
        }
        Command::Fixture(FixtureCommand::Gen { kind, seed, out_dir }) => {
            let dataset = fixtures::generate(&FixtureKind::from_name(&kind)?, seed)?;
            fs::create_dir_all(&out_dir)?;
            for split in [Split::Train, Split::Validation, Split::Test] {
                if dataset.split(split).next().is_some() {
                    dataset.write_split(split, &out_dir.join(format!("{}.tsv", split.as_str())))?;
                }
            }
            Ok(())
        }
        Command::Serve { addr } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                eprintln!("listening on {addr}");
                crate::service::serve(&addr).await
            })?;
            Ok(())
        }
    }
}

fn lasa(args: LasaArgs) -> Result<()> {
    let step3 = args.combo.step3.context("LASA needs a three-step combo such as hl-msm")?;
    let spec = match args.mode.as_str() {
        "avg" => ThresholdSpec::avg(args.s1, args.s2),
        "max" => ThresholdSpec::max(args.s1, args.s2),
        other => bail!("unknown threshold mode {other:?}"),
    };
    let (dataset, _, series) = args.data.symbolized()?;
    let stacks = prepare::stacks_for(&series, &args.attn.source(), args.data.seed)?;
    let lamas = prepare::lamas(&stacks, args.combo.lama_part());
    let mut text = String::new();
    for ((x, sample), lama) in series.iter().zip(dataset.samples()).zip(&lamas) {
        let a = abstract_with(x, &aggregate_lava(lama, step3), &spec)?;
        let record = AbstractionRecord {
            schema: ABSTRACTION_SCHEMA.into(),
            sample_id: x.id.clone(),
            label: x.label,
            split: sample.split,
            combo: args.combo,
            t1: a.thresholds.t1,
            t2: a.thresholds.t2,
            kept: a.kept.iter().map(|k| (k.position, k.value)).collect(),
            reduction: a.reduction,
            complexity: abstraction_complexity(&a),
        };
        text.push_str(&serde_json::to_string(&record)?);
        text.push('\n');
    }
    ensure_parent(&args.out)?;
    Ok(fs::write(&args.out, text)?)
}

fn gcr(cmd: GcrCommand) -> Result<()> {
    match cmd {
        GcrCommand::Build {
            data,
            attn,
            combo,
            variant,
            out,
        } => {
            if combo.step3.is_some() {
                bail!("GCR combos have two steps, got {combo}");
            }
            let (dataset, codec, series) = data.symbolized()?;
            let stacks = prepare::stacks_for(&series, &attn.source(), data.seed)?;
            let lamas = prepare::lamas(&stacks, combo);
            let train: Vec<TrainSample<'_>> = series
                .iter()
                .zip(dataset.samples())
                .zip(&lamas)
                .filter(|((_, s), _)| s.split == Split::Train)
                .map(|((x, _), l)| TrainSample {
                    series: x,
                    lama: &l.matrix,
                })
                .collect();
            let model = build(&train, variant, codec.symbol_count)?;
            ensure_parent(&out)?;
            model.write_store(&out, Some(combo))?;
            write_json(&codec_path(&out), &codec)
        }
        GcrCommand::Classify { store, codec, input, out } => {
            let (model, _) = GcrModel::read_store(&store)?;
            let codec: SaxCodec = read_json(&codec)?;
            let series: Vec<SymbolizedSeries> = read_rows(&input)?
                .into_iter()
                .enumerate()
                .map(|(row, (label, values))| codec.transform(format!("test-{row}"), label, &values))
                .collect::<Result<_, _>>()?;
            let results = series
                .iter()
                .map(|x| model.classify(&x.symbols))
                .collect::<Result<Vec<_>, _>>()?;
            let rows: Vec<_> = series.iter().zip(&results).collect();
            ensure_parent(&out)?;
            fs::write(&out, prepare::predictions_csv(&rows)?)?;
            let correct = series.iter().zip(&results).filter(|(x, r)| x.label == r.predicted).count();
            println!("accuracy {:.4} ({correct}/{})", correct as f64 / series.len().max(1) as f64, series.len());
            Ok(())
        }
        GcrCommand::Export { store, class, out } => {
            let (model, _) = GcrModel::read_store(&store)?;
            ensure_parent(&out)?;
            Ok(fs::write(&out, heatmap_json(&model, class)?)?)
        }
    }
}

fn metrics(cmd: MetricsCommand) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match cmd {
        MetricsCommand::Complexity { input } => {
            for (row, (label, values)) in read_rows(&input)?.into_iter().enumerate() {
                let report = complexity_report(&values, 0.0)?;
                let line = serde_json::json!({ "row": row, "label": label, "complexity": report });
                writeln!(stdout, "{line}")?;
            }
        }
        MetricsCommand::Fidelity { a, b } => {
            let a = prepare::read_predictions(&a)?;
            let b = prepare::read_predictions(&b)?;
            if a.len() != b.len() || a.keys().any(|k| !b.contains_key(k)) {
                bail!("prediction files cover different samples");
            }
            let (pa, pb): (Vec<Label>, Vec<Label>) = a.iter().map(|(k, v)| (*v, b[k])).unzip();
            writeln!(stdout, "{}", model_fidelity(&pa, &pb)?)?;
        }
        MetricsCommand::Consistency { folds, per_class } => {
            let folds: Vec<Vec<LabeledMatrix>> = folds.iter().map(|p| read_json(p)).collect::<Result<_>>()?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&consistency(&folds, per_class)?)?)?;
        }
    }
    Ok(())
}
