//! CSV ingestion, the normal-only train split and feature standardization.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Feature matrix with binary labels, `true` marking an anomaly.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub features: Tensor,
    pub labels: Vec<bool>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, features: Tensor, labels: Vec<bool>) -> Result<Self> {
        let (n, _) = features.expect_matrix("dataset features")?;
        if n != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if n == 0 {
            return Err(Error::Empty("dataset"));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
        })
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

    pub fn outlier_rate(&self) -> f64 {
        self.labels.iter().filter(|&&l| l).count() as f64 / self.len() as f64
    }
}

/// Reads a comma-separated file whose last column is a 0/1 label. A first
/// row with any non-numeric field is treated as a header.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_dataset(file, name)
}

pub fn read_dataset(reader: impl Read, name: impl Into<String>) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> =
            record.iter().map(str::parse::<f64>).collect();
        if i == 0 && parsed.iter().any(|p| p.is_err()) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                row,
                column: record.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        if w < 2 {
            return Err(Error::Parse {
                row,
                column: 1,
                message: "need at least one feature and a label".into(),
            });
        }
        let mut values = Vec::with_capacity(w);
        for (c, p) in parsed.into_iter().enumerate() {
            match p {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Parse {
                        row,
                        column: c + 1,
                        message: format!("'{}' is not a finite number", &record[c]),
                    })
                }
            }
        }
        let label = values.pop().expect("width checked");
        labels.push(match label {
            0.0 => false,
            1.0 => true,
            l => {
                return Err(Error::Parse {
                    row,
                    column: w,
                    message: format!("label {l} is not 0 or 1"),
                })
            }
        });
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Empty("dataset file"));
    }
    LabeledDataset::new(name, Tensor::from_rows(&rows)?, labels)
}

/// Per-column affine map to zero mean and unit variance. Columns with zero
/// variance are centered but not rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Tensor) -> Result<Self> {
        let (n, d) = x.expect_matrix("scaler input")?;
        if n == 0 {
            return Err(Error::Empty("scaler input"));
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &Tensor) -> Result<Tensor> {
        let (_, d) = x.expect_matrix("scaler input")?;
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: d,
            });
        }
        let mut out = x.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let c = k % d;
            *v = (*v - self.mean[c]) / self.scale[c];
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    /// Standardized normal rows.
    pub train: Tensor,
    /// Standardized held-out normals and every anomaly, in file order.
    pub test: Tensor,
    pub test_labels: Vec<bool>,
    pub scaler: Scaler,
}

fn select(x: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let d = x.cols();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    Tensor::matrix(idx.len(), d, data)
}

/// Trains on a seeded `train_frac` share of the normal rows and tests on the
/// remaining normals plus all anomalies, standardized with training
/// statistics.
pub fn split_and_standardize(ds: &LabeledDataset, train_frac: f64, seed: u64) -> Result<Split> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid(format!(
            "train_frac must lie in (0, 1), got {train_frac}"
        )));
    }
    let mut normals: Vec<usize> = (0..ds.len()).filter(|&i| !ds.labels[i]).collect();
    if normals.is_empty() {
        return Err(Error::Empty("normal samples"));
    }
    let n_train = ((train_frac * normals.len() as f64).round() as usize).clamp(1, normals.len());
    normals.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = normals[..n_train].to_vec();
    train_idx.sort_unstable();
    let mut in_train = vec![false; ds.len()];
    for &i in &train_idx {
        in_train[i] = true;
    }
    let test_idx: Vec<usize> = (0..ds.len()).filter(|&i| !in_train[i]).collect();
    let raw_train = select(&ds.features, &train_idx)?;
    let scaler = Scaler::fit(&raw_train)?;
    Ok(Split {
        train: scaler.transform(&raw_train)?,
        test: scaler.transform(&select(&ds.features, &test_idx)?)?,
        test_labels: test_idx.iter().map(|&i| ds.labels[i]).collect(),
        scaler,
    })
}
