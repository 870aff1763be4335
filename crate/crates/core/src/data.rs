//! Datasets: table loading, synthetic generation, standardization and the
//! k-fold train/validation/test protocol.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

/// Floor applied to per-feature standard deviations.
pub const STDDEV_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Two classes; class index 0 is `y = +1`, class index 1 is `y = -1`.
    Binary,
    OneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Libsvm,
}

/// Labelled samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_samples: usize,
    n_features: usize,
    labels: Vec<usize>,
    num_classes: usize,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let names = (0..num_classes).map(|c| c.to_string()).collect();
        Self::with_class_names(features, n_features, labels, names)
    }

    pub fn with_class_names(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let num_classes = class_names.len();
        if labels.is_empty() {
            return Err(Error::Empty("dataset has no samples".into()));
        }
        if n_features == 0 {
            return Err(Error::Empty("dataset has no features".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        Error::check_dim("feature matrix", labels.len() * n_features, features.len())?;
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos / n_features + 1,
                column: pos % n_features + 1,
                message: "non-finite feature value".into(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidConfig(format!(
                "label index {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            n_samples: labels.len(),
            features,
            n_features,
            labels,
            num_classes,
            class_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn encoding(&self) -> Encoding {
        if self.num_classes == 2 {
            Encoding::Binary
        } else {
            Encoding::OneHot
        }
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn x(&self, j: usize) -> &[f64] {
        &self.features[j * self.n_features..(j + 1) * self.n_features]
    }

    pub fn label(&self, j: usize) -> usize {
        self.labels[j]
    }

    /// `±1` label of a binary sample.
    pub fn sign(&self, j: usize) -> f64 {
        if self.labels[j] == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in the given order. Class metadata is preserved.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &j in indices {
            features.extend_from_slice(self.x(j));
            labels.push(self.labels[j]);
        }
        Dataset {
            n_samples: labels.len(),
            features,
            n_features: self.n_features,
            labels,
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        }
    }

    /// Content hash of features and labels (hex, 128 bits).
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n_samples as u64).to_le_bytes());
        hasher.update((self.n_features as u64).to_le_bytes());
        hasher.update((self.num_classes as u64).to_le_bytes());
        for v in &self.features {
            hasher.update(v.to_bits().to_le_bytes());
        }
        for &l in &self.labels {
            hasher.update((l as u64).to_le_bytes());
        }
        let digest = hasher.finalize();
        hex::encode(&digest[..16])
    }
}

/// Canonical key for a label cell: numeric labels compare by value so that
/// `+1`, `1` and `1.0` name the same class.
fn label_key(raw: &str) -> String {
    let raw = raw.trim();
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => format!("{v}"),
        _ => raw.to_string(),
    }
}

#[derive(Default)]
struct LabelIndexer {
    index: HashMap<String, usize>,
    names: Vec<String>,
}

impl LabelIndexer {
    fn get(&mut self, raw: &str) -> usize {
        let key = label_key(raw);
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(key, i);
        self.names.push(raw.trim().to_string());
        i
    }
}

/// Load a CSV or LIBSVM table. Labels are re-indexed to `0..c` in order of
/// first appearance.
///
/// CSV: comma separated, optional header row (detected when a feature cell
/// of the first row is not numeric), label in `label_column` or the last
/// column. LIBSVM: `label idx:val ...` with 1-based indices, densified.
pub fn load_table(path: &Path, format: TableFormat, label_column: Option<usize>) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        TableFormat::Csv => parse_csv(&text, label_column),
        TableFormat::Libsvm => parse_libsvm(&text),
    }
}

pub fn parse_csv(text: &str, label_column: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut indexer = LabelIndexer::default();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;

    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let ncols = record.len();
        if ncols < 2 {
            return Err(Error::Parse {
                row,
                column: 1,
                message: "need at least one feature and a label".into(),
            });
        }
        let label_col = label_column.unwrap_or(ncols - 1);
        if label_col >= ncols {
            return Err(Error::Parse {
                row,
                column: label_col + 1,
                message: format!("label column out of range ({ncols} columns)"),
            });
        }

        let mut parsed = Vec::with_capacity(ncols - 1);
        let mut bad_cell = None;
        for (c, cell) in record.iter().enumerate() {
            if c == label_col {
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push(v),
                _ => {
                    bad_cell = Some((c, cell.to_string()));
                    break;
                }
            }
        }
        if let Some((c, cell)) = bad_cell {
            if labels.is_empty() && width.is_none() {
                // header row
                width = Some(ncols);
                continue;
            }
            return Err(Error::Parse {
                row,
                column: c + 1,
                message: format!("non-numeric feature value {cell:?}"),
            });
        }
        match width {
            Some(w) if w != ncols => {
                return Err(Error::Parse {
                    row,
                    column: ncols,
                    message: format!("expected {w} columns, found {ncols}"),
                })
            }
            _ => width = Some(ncols),
        }
        features.extend(parsed);
        labels.push(indexer.get(&record[label_col]));
    }

    if labels.is_empty() {
        return Err(Error::Empty("table has no data rows".into()));
    }
    let n_features = features.len() / labels.len();
    finish(features, n_features, labels, indexer)
}

pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut indexer = LabelIndexer::default();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut n_features = 0;

    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = tokens.next().expect("non-empty line");
        let mut entries = Vec::new();
        for (t, token) in tokens.enumerate() {
            let column = t + 2;
            let (idx, val) = token.split_once(':').ok_or_else(|| Error::Parse {
                row,
                column,
                message: format!("expected idx:val, found {token:?}"),
            })?;
            let idx: usize = idx.parse().ok().filter(|&i| i >= 1).ok_or_else(|| Error::Parse {
                row,
                column,
                message: format!("invalid feature index {idx:?}"),
            })?;
            let val: f64 = val.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::Parse {
                    row,
                    column,
                    message: format!("non-numeric feature value {val:?}"),
                }
            })?;
            n_features = n_features.max(idx);
            entries.push((idx - 1, val));
        }
        labels.push(indexer.get(label));
        rows.push(entries);
    }

    if labels.is_empty() {
        return Err(Error::Empty("table has no data rows".into()));
    }
    let mut features = vec![0.0; rows.len() * n_features];
    for (j, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            features[j * n_features + c] = v;
        }
    }
    finish(features, n_features, labels, indexer)
}

fn finish(
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    indexer: LabelIndexer,
) -> Result<Dataset> {
    if indexer.names.len() < 2 {
        return Err(Error::InvalidConfig(
            "table contains a single class".into(),
        ));
    }
    Dataset::with_class_names(features, n_features, labels, indexer.names)
}

/// Two concentric rings in the plane: class index 0 (`y = +1`) at radius 1,
/// class index 1 (`y = -1`) at radius 2, with Gaussian radial noise.
pub fn gen_double_circle(n_per_class: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::Precondition("n_per_class must be >= 1".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Precondition(format!(
            "noise_sigma must be finite and >= 0, got {noise_sigma}"
        )));
    }
    let mut rng = rng::stream(seed, rng::DATA_STREAM);
    let mut features = Vec::with_capacity(4 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for (class, radius) in [(0usize, 1.0f64), (1, 2.0)] {
        for _ in 0..n_per_class {
            let phi = rng.random::<f64>() * TAU;
            let eps: f64 = rng.sample(StandardNormal);
            let r = radius + noise_sigma * eps;
            features.push(r * phi.cos());
            features.push(r * phi.sin());
            labels.push(class);
        }
    }
    Dataset::with_class_names(features, 2, labels, vec!["+1".into(), "-1".into()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    /// Columns whose raw deviation fell below [`STDDEV_FLOOR`].
    pub floored: Vec<bool>,
}

impl StandardizationStats {
    pub fn fit(data: &Dataset) -> Self {
        let n = data.n_features();
        let count = data.n_samples() as f64;
        let first = data.x(0);
        let mut mean = vec![0.0; n];
        let mut stddev = vec![0.0; n];
        let mut floored = vec![false; n];
        for c in 0..n {
            // shifted sums keep constant columns exact
            let shift = first[c];
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for j in 0..data.n_samples() {
                let d = data.x(j)[c] - shift;
                sum += d;
                sum_sq += d * d;
            }
            let mean_shifted = sum / count;
            let var = (sum_sq / count - mean_shifted * mean_shifted).max(0.0);
            mean[c] = shift + mean_shifted;
            let sd = var.sqrt();
            if sd < STDDEV_FLOOR {
                stddev[c] = STDDEV_FLOOR;
                floored[c] = true;
            } else {
                stddev[c] = sd;
            }
        }
        StandardizationStats {
            mean,
            stddev,
            floored,
        }
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let n = data.n_features();
        let mut out = data.clone();
        for (k, v) in out.features.iter_mut().enumerate() {
            let c = k % n;
            *v = if self.floored[c] {
                0.0
            } else {
                (*v - self.mean[c]) / self.stddev[c]
            };
        }
        out
    }

    pub fn invert(&self, data: &Dataset) -> Dataset {
        let n = data.n_features();
        let mut out = data.clone();
        for (k, v) in out.features.iter_mut().enumerate() {
            let c = k % n;
            *v = *v * self.stddev[c] + self.mean[c];
        }
        out
    }
}

/// Z-score every set with statistics fitted on `train`.
pub fn standardize(
    train: &Dataset,
    others: &[Dataset],
) -> (Dataset, Vec<Dataset>, StandardizationStats) {
    let stats = StandardizationStats::fit(train);
    let train = stats.apply(train);
    let others = others.iter().map(|d| stats.apply(d)).collect();
    (train, others, stats)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    /// Seeded shuffle dealt round-robin into `k` folds.
    pub fn new(n_samples: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 3 {
            return Err(Error::Precondition(format!("k must be >= 3, got {k}")));
        }
        if n_samples < k {
            return Err(Error::Precondition(format!(
                "dataset of {n_samples} samples is smaller than k = {k}"
            )));
        }
        let mut order: Vec<usize> = (0..n_samples).collect();
        order.shuffle(&mut rng::stream(seed, rng::FOLD_STREAM));
        let mut fold_of = vec![0; n_samples];
        for (pos, &j) in order.iter().enumerate() {
            fold_of[j] = pos % k;
        }
        Ok(FoldAssignment { fold_of, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(train, valid, test)` indices for one run: validation is fold
    /// `run_index`, test is fold `run_index + 1 (mod k)`.
    pub fn split_indices(&self, run_index: usize) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        if run_index >= self.k {
            return Err(Error::Precondition(format!(
                "run_index {run_index} out of range for k = {}",
                self.k
            )));
        }
        let valid_fold = run_index;
        let test_fold = (run_index + 1) % self.k;
        let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for (j, &f) in self.fold_of.iter().enumerate() {
            if f == valid_fold {
                valid.push(j);
            } else if f == test_fold {
                test.push(j);
            } else {
                train.push(j);
            }
        }
        Ok((train, valid, test))
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

pub fn kfold_protocol(dataset: &Dataset, k: usize, run_index: usize, seed: u64) -> Result<Splits> {
    let folds = FoldAssignment::new(dataset.n_samples(), k, seed)?;
    let (train, valid, test) = folds.split_indices(run_index)?;
    Ok(Splits {
        train: dataset.subset(&train),
        valid: dataset.subset(&valid),
        test: dataset.subset(&test),
    })
}
