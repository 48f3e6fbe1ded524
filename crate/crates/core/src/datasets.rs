//! Iris and binary-digits classification data, preprocessed for amplitude
//! encoding.
//!
//! Data files are plain text, one sample per line: the feature values
//! followed by an integer class label, separated by commas or whitespace.
//! Lines starting with `#` are comments. Both corpora ship embedded in the
//! crate; any file in the same format can be loaded instead.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum::LabeledSample;

pub const IRIS_CSV: &str = include_str!("../data/iris.csv");
pub const DIGITS_CSV: &str = include_str!("../data/digits.csv");

pub const TRAIN_FRACTION: f64 = 0.7;
pub const DEFAULT_SPLIT_SEED: u64 = 42;
pub const MNIST_COMPONENTS: usize = 32;

const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Features and integer labels as read from a data file.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl RawTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut width = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> =
                line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 1));
            let (label, values) = fields.split_last().ok_or_else(|| bad("empty row"))?;
            if values.is_empty() {
                return Err(bad("row has no features"));
            }
            if *width.get_or_insert(values.len()) != values.len() {
                return Err(bad("inconsistent column count"));
            }
            let row = values
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| bad("non-numeric feature")))
                .collect::<Result<Vec<_>>>()?;
            features.push(row);
            labels.push(label.parse::<usize>().map_err(|_| bad("label is not a non-negative integer"))?);
        }
        if features.is_empty() {
            return Err(Error::Parse("no samples".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn iris() -> Self {
        Self::parse(IRIS_CSV).expect("embedded iris table parses")
    }

    pub fn digits() -> Self {
        Self::parse(DIGITS_CSV).expect("embedded digits table parses")
    }
}

/// A preprocessed classification dataset with a fixed train/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Vec<Split>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
        split: Vec<Split>,
    ) -> Result<Self> {
        let n = features.len();
        if n == 0 || labels.len() != n || split.len() != n {
            return Err(invalid("features, labels and split must be non-empty and equally long"));
        }
        let width = features[0].len();
        for row in &features {
            if row.len() != width {
                return Err(invalid("ragged feature matrix"));
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_TOL {
                return Err(invalid(format!("feature row has norm {norm}")));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(invalid(format!("label {bad} with {num_classes} classes")));
        }
        Ok(Self { name: name.into(), features, labels, num_classes, split })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Qubits needed to amplitude-encode one sample.
    pub fn num_qubits(&self) -> usize {
        self.num_features().next_power_of_two().trailing_zeros() as usize
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.split[i]
    }

    pub fn splits(&self) -> &[Split] {
        &self.split
    }

    pub fn labels_onehot(&self) -> Vec<Vec<u8>> {
        self.labels
            .iter()
            .map(|&l| (0..self.num_classes).map(|c| u8::from(c == l)).collect())
            .collect()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn samples(&self, split: Split) -> Vec<LabeledSample<'_>> {
        self.indices(split)
            .into_iter()
            .map(|i| LabeledSample { amplitudes: &self.features[i], label: self.labels[i] })
            .collect()
    }
}

pub fn l2_normalize(row: &[f64]) -> Result<Vec<f64>> {
    let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(invalid("cannot normalize a zero or non-finite row"));
    }
    Ok(row.iter().map(|x| x / norm).collect())
}

/// Per-class shuffled split: within each class, `round(0.7 * n)` samples go
/// to train. Classes are visited in ascending label order with one RNG.
pub fn stratified_split(labels: &[usize], train_fraction: f64, seed: u64) -> Vec<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = vec![Split::Test; labels.len()];
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let n_train = (members.len() as f64 * train_fraction).round() as usize;
        for &i in &members[..n_train] {
            split[i] = Split::Train;
        }
    }
    split
}

pub fn load_iris(class_filter: Option<(usize, usize)>, seed: u64) -> Result<Dataset> {
    load_iris_table(&RawTable::iris(), class_filter, seed)
}

/// Iris from any table with 4 features and labels in {0, 1, 2}. With a
/// filter `(a, b)` only those classes are kept, relabeled to 0 and 1.
pub fn load_iris_table(table: &RawTable, class_filter: Option<(usize, usize)>, seed: u64) -> Result<Dataset> {
    if table.features[0].len() != 4 {
        return Err(invalid("iris rows need 4 features"));
    }
    let (keep, name): (Vec<usize>, String) = match class_filter {
        None => (vec![0, 1, 2], "iris".into()),
        Some((a, b)) => {
            if a > 2 || b > 2 || a == b {
                return Err(invalid(format!("invalid iris class pair ({a}, {b})")));
            }
            (vec![a, b], format!("iris2_{a}{b}"))
        }
    };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, &label) in table.features.iter().zip(&table.labels) {
        if let Some(new_label) = keep.iter().position(|&k| k == label) {
            features.push(l2_normalize(row)?);
            labels.push(new_label);
        }
    }
    let split = stratified_split(&labels, TRAIN_FRACTION, seed);
    Dataset::new(name, features, labels, keep.len(), split)
}

pub fn load_mnist2(seed: u64) -> Result<(Dataset, PcaModel)> {
    load_mnist2_table(&RawTable::digits(), seed)
}

/// Digits 0 and 1 from an 8x8 digits table: standardized and projected onto
/// 32 principal components (both fit on the train split), then
/// L2-normalized.
pub fn load_mnist2_table(table: &RawTable, seed: u64) -> Result<(Dataset, PcaModel)> {
    if table.features[0].len() != 64 {
        return Err(invalid("digits rows need 64 features"));
    }
    let (rows, labels): (Vec<Vec<f64>>, Vec<usize>) = table
        .features
        .iter()
        .zip(&table.labels)
        .filter(|(_, &l)| l < 2)
        .map(|(r, &l)| (r.clone(), l))
        .unzip();
    if rows.is_empty() {
        return Err(invalid("no digits 0 or 1 in table"));
    }
    let split = stratified_split(&labels, TRAIN_FRACTION, seed);
    let train: Vec<Vec<f64>> =
        rows.iter().zip(&split).filter(|(_, s)| **s == Split::Train).map(|(r, _)| r.clone()).collect();

    let scaler = Standardizer::fit(&train)?;
    let train_scaled: Vec<Vec<f64>> = train.iter().map(|r| scaler.transform(r)).collect();
    let pca = fit_pca(&train_scaled, MNIST_COMPONENTS)?;
    let features = rows
        .iter()
        .map(|r| l2_normalize(&pca.transform(&scaler.transform(r))))
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset::new("mnist2", features, labels, 2, split)?, pca))
}

/// Zero-mean, unit-variance scaling. Constant columns are only centered.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(invalid("cannot standardize zero rows"));
        }
        let dim = rows[0].len();
        let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let scale = (0..dim)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `dim`, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: f64,
}

impl PcaModel {
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((w, x), m)| w * (x - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, projected: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &z) in self.components.iter().zip(projected) {
            for (o, w) in out.iter_mut().zip(c) {
                *o += w * z;
            }
        }
        out
    }
}

/// Top-`k` principal components of the rows of `data`. Each component's
/// largest-magnitude entry is made positive.
pub fn fit_pca(data: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let n = data.len();
    if n == 0 {
        return Err(invalid("PCA on empty data"));
    }
    let dim = data[0].len();
    if k == 0 || k > dim.min(n) {
        return Err(invalid(format!("k = {k} for {n} samples of dimension {dim}")));
    }
    let mean: Vec<f64> = (0..dim).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, dim, |i, j| data[i][j] - mean[j]);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let cov = (centered.transpose() * &centered) / denom;
    let total: f64 = cov.diagonal().iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(invalid("data has zero variance"));
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &idx in &order[..k] {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    let ratio = (explained_variance.iter().sum::<f64>() / total).clamp(0.0, 1.0);
    Ok(PcaModel { mean, components, explained_variance, explained_variance_ratio: ratio })
}
