//! Labelled univariate datasets and their CSV/TSV representation.
//!
//! One series per row: the first column is the integer class label, the
//! remaining `n` columns are finite decimal values. Train and test are read
//! from separate files; tabs or commas are both accepted as delimiters.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Label = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("series length mismatch: expected {expected}, row {row} has {found}")]
    LengthMismatch {
        expected: usize,
        found: usize,
        row: usize,
    },
    #[error("series must have at least 2 points")]
    TooShort,
    #[error("train partition is empty")]
    EmptyTrain,
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },
}

/// A labelled sample with its partition marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub label: Label,
    pub split: Split,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    samples: Vec<Sample>,
    n: usize,
    classes: Vec<Label>,
}

impl RawDataset {
    /// Validates shape, finiteness and the non-empty train partition.
    pub fn new(samples: Vec<Sample>) -> Result<Self, DatasetError> {
        let n = match samples.first() {
            Some(s) => s.values.len(),
            None => return Err(DatasetError::EmptyTrain),
        };
        if n < 2 {
            return Err(DatasetError::TooShort);
        }
        for (row, s) in samples.iter().enumerate() {
            if s.values.len() != n {
                return Err(DatasetError::LengthMismatch {
                    expected: n,
                    found: s.values.len(),
                    row,
                });
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite { row });
            }
        }
        if !samples.iter().any(|s| s.split == Split::Train) {
            return Err(DatasetError::EmptyTrain);
        }
        let classes: BTreeSet<Label> = samples.iter().map(|s| s.label).collect();
        Ok(Self {
            samples,
            n,
            classes: classes.into_iter().collect(),
        })
    }

    /// Builds a dataset from separately loaded train and test rows. Sample ids
    /// are `train-{row}` / `test-{row}`; train rows come first.
    pub fn from_splits(
        train: Vec<(Label, Vec<f64>)>,
        test: Vec<(Label, Vec<f64>)>,
    ) -> Result<Self, DatasetError> {
        if train.is_empty() {
            return Err(DatasetError::EmptyTrain);
        }
        let mut samples = Vec::with_capacity(train.len() + test.len());
        for (split, rows) in [(Split::Train, train), (Split::Test, test)] {
            for (row, (label, values)) in rows.into_iter().enumerate() {
                samples.push(Sample {
                    id: format!("{}-{row}", split.as_str()),
                    label,
                    split,
                    values,
                });
            }
        }
        Self::new(samples)
    }

    pub fn load(train: &Path, test: Option<&Path>) -> Result<Self, DatasetError> {
        let train_rows = read_rows(train)?;
        let test_rows = match test {
            Some(p) => read_rows(p)?,
            None => Vec::new(),
        };
        Self::from_splits(train_rows, test_rows)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> &[Label] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes every sample of `split` in the row format.
    pub fn write_split(&self, split: Split, path: &Path) -> Result<(), DatasetError> {
        let rows: Vec<(Label, &[f64])> = self
            .split(split)
            .map(|s| (s.label, s.values.as_slice()))
            .collect();
        write_rows(path, &rows)
    }
}

fn delimiter_for(text: &str) -> u8 {
    match text.lines().find(|l| !l.trim().is_empty()) {
        Some(line) if line.contains('\t') => b'\t',
        _ => b',',
    }
}

/// Parses label-first rows from CSV or TSV text.
pub fn parse_rows(text: &str) -> Result<Vec<(Label, Vec<f64>)>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter_for(text))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut fields = record.iter();
        let label_text = fields.next().unwrap_or_default();
        let label = parse_label(label_text).ok_or_else(|| DatasetError::Parse {
            row,
            msg: format!("invalid label {label_text:?}"),
        })?;
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| DatasetError::Parse {
                    row,
                    msg: format!("invalid value {f:?}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite { row });
        }
        rows.push((label, values));
    }
    Ok(rows)
}

// UCR files sometimes store integer labels as "1.0000000e+00".
fn parse_label(text: &str) -> Option<Label> {
    if let Ok(v) = text.parse::<Label>() {
        return Some(v);
    }
    let v = text.parse::<f64>().ok()?;
    (v.fract() == 0.0 && v.is_finite()).then_some(v as Label)
}

pub fn read_rows(path: &Path) -> Result<Vec<(Label, Vec<f64>)>, DatasetError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_rows(&text)
}

pub fn write_rows(path: &Path, rows: &[(Label, &[f64])]) -> Result<(), DatasetError> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    out.write_all(format_rows(rows).as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Comma-separated, shortest round-trip float formatting.
pub fn format_rows(rows: &[(Label, &[f64])]) -> String {
    let mut text = String::new();
    for (label, values) in rows {
        text.push_str(&label.to_string());
        for v in values.iter() {
            text.push(',');
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    text
}
