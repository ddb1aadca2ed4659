//! Tabular binary-classification data: CSV ingestion, feature scaling and
//! seeded random splits.

pub mod fetch;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Feature matrix with labels in {+1, −1}.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Mat,
    labels: Vec<f64>,
    feature_names: Vec<String>,
    source_id: String,
}

impl Dataset {
    pub fn new(
        features: Mat,
        labels: Vec<f64>,
        feature_names: Vec<String>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if features.cols() == 0 {
            return Err(Error::Data("dataset needs at least one feature".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if feature_names.len() != features.cols() {
            return Err(Error::DimensionMismatch {
                expected: features.cols(),
                got: feature_names.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::Data(format!("label {bad} is not +1 or -1")));
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
            source_id: source_id.into(),
        })
    }

    /// Convenience constructor with generated feature names.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], labels: &[f64]) -> Result<Self> {
        let features = Mat::from_rows(rows)?;
        let names = (0..features.cols()).map(|j| format!("x{j}")).collect();
        Dataset::new(features, labels.to_vec(), names, "inline")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Mat {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn has_both_classes(&self) -> bool {
        has_both(&self.labels, 0..self.labels.len())
    }

    /// Copy of the rows in `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            source_id: self.source_id.clone(),
        }
    }

    /// Same rows with every label negated.
    pub fn flipped(&self) -> Dataset {
        let mut out = self.clone();
        out.labels.iter_mut().for_each(|y| *y = -*y);
        out
    }
}

fn has_both(labels: &[f64], idx: impl IntoIterator<Item = usize>) -> bool {
    let (mut pos, mut neg) = (false, false);
    for i in idx {
        if labels[i] > 0.0 {
            pos = true;
        } else {
            neg = true;
        }
        if pos && neg {
            return true;
        }
    }
    false
}

/// Which CSV column holds the class label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
    Last,
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "last" | "-1" => LabelColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Name(n) => write!(f, "{n}"),
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Last => write!(f, "last"),
        }
    }
}

/// Result of [`load_csv`]: the dataset plus the number of discarded rows.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

/// Read a CSV file; see [`parse_csv`].
pub fn load_csv(path: &Path, label: &LabelColumn, positive_label: &str) -> Result<Loaded> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&bytes, label, positive_label, &id)
}

/// Parse CSV bytes into a dataset.
///
/// The first record is a header iff one of its feature cells is not numeric.
/// Rows with an empty or non-numeric feature cell, or an empty label, are
/// dropped and counted.
pub fn parse_csv(
    bytes: &[u8],
    label: &LabelColumn,
    positive_label: &str,
    source_id: &str,
) -> Result<Loaded> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let records: Vec<csv::StringRecord> =
        reader.records().collect::<std::result::Result<_, _>>()?;
    let first = records
        .first()
        .ok_or_else(|| Error::Data("empty csv".into()))?;
    let width = first.len();
    if width < 2 {
        return Err(Error::Data(
            "csv needs a label and at least one feature column".into(),
        ));
    }

    let label_idx = match label {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => {
            return Err(Error::Data(format!(
                "label column {i} out of range ({width} columns)"
            )))
        }
        LabelColumn::Last => width - 1,
        LabelColumn::Name(name) => first
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Data(format!("label column {name:?} not found in header")))?,
    };
    let header = matches!(label, LabelColumn::Name(_))
        || first
            .iter()
            .enumerate()
            .any(|(j, c)| j != label_idx && c.parse::<f64>().is_err());

    let feature_names: Vec<String> = if header {
        first
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != label_idx)
            .map(|(_, c)| c.to_string())
            .collect()
    } else {
        (0..width - 1).map(|j| format!("x{j}")).collect()
    };

    let mut values = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut dropped = 0usize;
    for rec in records.iter().skip(usize::from(header)) {
        if rec.len() != width {
            dropped += 1;
            continue;
        }
        let lab = &rec[label_idx];
        let mut row = Vec::with_capacity(width - 1);
        let mut ok = !lab.is_empty();
        for (j, cell) in rec.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            values.extend(row);
            raw_labels.push(lab.to_string());
        } else {
            dropped += 1;
        }
    }

    if raw_labels.is_empty() {
        return Err(Error::Data("no usable rows".into()));
    }
    let mut distinct: Vec<&str> = raw_labels.iter().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != 2 {
        return Err(Error::Data(format!(
            "expected exactly two distinct labels, found {}: {:?}",
            distinct.len(),
            &distinct[..distinct.len().min(5)]
        )));
    }
    if !distinct.contains(&positive_label) {
        return Err(Error::Data(format!(
            "positive label {positive_label:?} not among {distinct:?}"
        )));
    }
    let labels = raw_labels
        .iter()
        .map(|l| if l == positive_label { 1.0 } else { -1.0 })
        .collect::<Vec<_>>();
    let features = Mat::from_vec(labels.len(), width - 1, values)?;
    Ok(Loaded {
        dataset: Dataset::new(features, labels, feature_names, source_id)?,
        dropped_rows: dropped,
    })
}

/// Per-feature multiplicative scaling (reciprocal sample standard deviations).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub per_feature_scale: Vec<f64>,
}

impl StandardizationParams {
    /// Fit on `reference`. Features with zero variance get scale 1.
    pub fn fit(reference: &Dataset) -> Result<Self> {
        let n = reference.len();
        if n == 0 {
            return Err(Error::Data("cannot standardize an empty dataset".into()));
        }
        let d = reference.dim();
        let mut scale = vec![1.0; d];
        if n >= 2 {
            for (j, s) in scale.iter_mut().enumerate() {
                let mean = (0..n).map(|i| reference.row(i)[j]).sum::<f64>() / n as f64;
                let var = (0..n)
                    .map(|i| (reference.row(i)[j] - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1) as f64;
                let sd = var.sqrt();
                if sd > 0.0 && sd.is_finite() {
                    *s = 1.0 / sd;
                }
            }
        }
        Ok(StandardizationParams {
            per_feature_scale: scale,
        })
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        crate::error::check_dim(self.per_feature_scale.len(), data.dim())?;
        let mut out = data.clone();
        for i in 0..out.len() {
            for (v, s) in out
                .features
                .row_mut(i)
                .iter_mut()
                .zip(&self.per_feature_scale)
            {
                *v *= s;
            }
        }
        Ok(out)
    }
}

/// Seeded random partition recipe.
///
/// `train_fraction` splits the index set into train/test; each entry of
/// `nested_fractions` then splits the most recent *second* part again (the
/// first level splits train).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_fraction: f64,
    #[serde(default)]
    pub nested_fractions: Vec<f64>,
}

impl SplitPlan {
    pub fn new(seed: u64, train_fraction: f64) -> Self {
        SplitPlan {
            seed,
            train_fraction,
            nested_fractions: Vec::new(),
        }
    }

    pub fn with_nested(mut self, fractions: &[f64]) -> Self {
        self.nested_fractions = fractions.to_vec();
        self
    }

    fn validate(&self) -> Result<()> {
        for &f in std::iter::once(&self.train_fraction).chain(&self.nested_fractions) {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "split fraction {f} not in (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Index sets produced by [`split`].
///
/// For nested fractions `[f1, f2, ...]`, `nested` holds
/// `[A, B1, B2]` where train = A ∪ B, |A| = [`part_size`]`(f1, |train|)`,
/// and B = B1 ∪ B2 with |B1| = `part_size(f2, |B|)`, and so on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub nested: Vec<Vec<usize>>,
}

impl Partition {
    pub fn parts(&self) -> Vec<&[usize]> {
        let mut v: Vec<&[usize]> = vec![&self.train, &self.test];
        v.extend(self.nested.iter().map(Vec::as_slice));
        v
    }
}

pub const SPLIT_RETRY_CAP: usize = 100;

/// Size of the first part of a `fraction` split of `n` items: nearest
/// integer, ties to even.
pub fn part_size(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round_ties_even() as usize
}

/// Random partition of `0..dataset.len()` following `plan`.
///
/// Every part must be nonempty and contain both labels; otherwise the draw is
/// repeated with seed+1, up to [`SPLIT_RETRY_CAP`] attempts.
pub fn split(dataset: &Dataset, plan: &SplitPlan) -> Result<Partition> {
    split_labels(dataset.labels(), plan)
}

pub fn split_labels(labels: &[f64], plan: &SplitPlan) -> Result<Partition> {
    plan.validate()?;
    let n = labels.len();
    for attempt in 0..SPLIT_RETRY_CAP {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed.wrapping_add(attempt as u64));
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let cut = part_size(plan.train_fraction, n);
        let (train, test) = idx.split_at(cut);
        let mut nested = Vec::new();
        if !plan.nested_fractions.is_empty() {
            let mut rest = train.to_vec();
            for &f in &plan.nested_fractions {
                let c = part_size(f, rest.len());
                let tail = rest.split_off(c);
                nested.push(rest);
                rest = tail;
            }
            nested.push(rest);
        }
        let p = Partition {
            train: train.to_vec(),
            test: test.to_vec(),
            nested,
        };
        if p.parts()
            .iter()
            .all(|part| !part.is_empty() && has_both(labels, part.iter().copied()))
        {
            return Ok(p);
        }
    }
    Err(Error::SplitRetries {
        attempts: SPLIT_RETRY_CAP,
    })
}
