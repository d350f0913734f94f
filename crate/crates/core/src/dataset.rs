//! Tabular classification data: CSV ingestion, z-score standardization,
//! seeded splits and a synthetic Gaussian-blob generator.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to per-feature standard deviations.
pub const STD_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty dataset")]
    Empty,
    #[error("missing header row")]
    MissingHeader,
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("need at least 2 distinct labels, found {0}")]
    TooFewClasses(usize),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("split produced an empty part (train {train}, test {test})")]
    EmptySplit { train: usize, test: usize },
    #[error("feature count mismatch: expected {expected}, found {found}")]
    FeatureMismatch { expected: usize, found: usize },
}

/// Feature matrix plus integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, DatasetError> {
        let width = features.first().map_or(0, Vec::len);
        if let Some(row) = features.iter().find(|r| r.len() != width) {
            return Err(DatasetError::FeatureMismatch {
                expected: width,
                found: row.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DatasetError::LabelOutOfRange { label, num_classes });
        }
        assert_eq!(features.len(), labels.len(), "one label per sample");
        Ok(Dataset {
            features,
            labels,
            num_classes,
            feature_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Reads a headed CSV. Labels are remapped to `0..k` in order of first
/// appearance; every other column must hold finite decimal numbers.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_csv(&text, label_column)
}

pub fn parse_csv(text: &str, label_column: &str) -> Result<Dataset, DatasetError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or(DatasetError::MissingHeader)?
        .split(',')
        .map(|s| s.trim().to_owned())
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DatasetError::MissingLabelColumn(label_column.to_owned()))?;

    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(DatasetError::RaggedRow {
                row,
                expected: header.len(),
                found: cells.len(),
            });
        }
        let mut values = Vec::with_capacity(header.len() - 1);
        for (c, cell) in cells.iter().enumerate() {
            if c == label_idx {
                continue;
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DatasetError::BadCell {
                    row,
                    column: header[c].clone(),
                    value: (*cell).to_owned(),
                })?;
            values.push(v);
        }
        let next_id = class_ids.len();
        let label = *class_ids
            .entry(cells[label_idx].to_owned())
            .or_insert(next_id);
        features.push(values);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DatasetError::Empty);
    }
    if class_ids.len() < 2 {
        return Err(DatasetError::TooFewClasses(class_ids.len()));
    }
    let mut ds = Dataset::new(features, labels, class_ids.len())?;
    ds.feature_names = Some(
        header
            .into_iter()
            .enumerate()
            .filter_map(|(i, h)| (i != label_idx).then_some(h))
            .collect(),
    );
    Ok(ds)
}

/// Per-feature statistics from the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn from_dataset(data: &Dataset) -> Result<Self, DatasetError> {
        if data.is_empty() {
            return Err(DatasetError::Empty);
        }
        let n = data.len() as f64;
        let d = data.num_features();
        let mut mean = vec![0.0; d];
        for row in &data.features {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in &data.features {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(FeatureStats { mean, std })
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset, DatasetError> {
        if data.num_features() != self.mean.len() && !data.is_empty() {
            return Err(DatasetError::FeatureMismatch {
                expected: self.mean.len(),
                found: data.num_features(),
            });
        }
        let mut out = data.clone();
        for row in &mut out.features {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s.max(STD_EPSILON);
            }
        }
        Ok(out)
    }
}

/// Z-scores `train` and every dataset in `others` with statistics from `train`.
pub fn standardize(
    train: &Dataset,
    others: &[Dataset],
) -> Result<(Dataset, Vec<Dataset>, FeatureStats), DatasetError> {
    let stats = FeatureStats::from_dataset(train)?;
    let train_std = stats.apply(train)?;
    let others_std = others
        .iter()
        .map(|d| stats.apply(d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((train_std, others_std, stats))
}

/// Seeded shuffle, then the first `floor(n * train_fraction)` samples go to train.
pub fn split(
    data: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    let (train_idx, test_idx) = split_indices(data.len(), train_fraction, seed)?;
    Ok((data.subset(&train_idx), data.subset(&test_idx)))
}

pub fn split_indices(
    n: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (n as f64 * train_fraction).floor() as usize;
    if cut == 0 || cut == n {
        return Err(DatasetError::EmptySplit {
            train: cut,
            test: n - cut,
        });
    }
    let test = idx.split_off(cut);
    Ok((idx, test))
}

/// Isotropic Gaussian clusters, one per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub samples: usize,
    pub features: usize,
    pub classes: usize,
    /// Scale of the class centres (drawn standard normal, then multiplied).
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Per-feature standard deviation inside a cluster.
    #[serde(default = "default_spread")]
    pub spread: f64,
    pub seed: u64,
}

fn default_separation() -> f64 {
    2.0
}

fn default_spread() -> f64 {
    1.0
}

/// Draws `samples` points, labels cycling over the classes.
pub fn make_blobs(spec: &BlobSpec) -> Result<Dataset, DatasetError> {
    if spec.classes < 2 {
        return Err(DatasetError::TooFewClasses(spec.classes));
    }
    if spec.samples == 0 {
        return Err(DatasetError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centres: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.features)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * spec.separation)
                .collect()
        })
        .collect();
    let mut features = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let class = i % spec.classes;
        features.push(
            centres[class]
                .iter()
                .map(|c| c + rng.sample::<f64, _>(StandardNormal) * spec.spread)
                .collect(),
        );
        labels.push(class);
    }
    Dataset::new(features, labels, spec.classes)
}
