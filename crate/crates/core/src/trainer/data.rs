//! Synthetic Gaussian-mixture data and CSV datasets.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::random;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

/// Samples are columns of `features` (`d_in × n`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        if labels.len() != features.cols() {
            return Err(Error::Dimension {
                op: "Dataset::new",
                detail: format!("{} labels for {} samples", labels.len(), features.cols()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Size(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self {
            features,
            labels,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.rows()
    }

    /// Columns `idx` as a `d_in × idx.len()` matrix, with their labels.
    pub fn gather(&self, idx: &[usize]) -> (Matrix, Vec<usize>) {
        let d = self.dim();
        let x = Matrix::from_fn(d, idx.len(), |i, j| self.features[(i, idx[j])]);
        (x, idx.iter().map(|&k| self.labels[k]).collect())
    }

    /// Keeps the first `1 − val_fraction` of samples for training and the rest
    /// for validation.
    pub fn split(&self, val_fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must be in [0, 1), got {val_fraction}"
            )));
        }
        let n_val = (self.len() as f64 * val_fraction).round() as usize;
        let n_train = self.len() - n_val;
        let train_idx: Vec<usize> = (0..n_train).collect();
        let val_idx: Vec<usize> = (n_train..self.len()).collect();
        let (xt, yt) = self.gather(&train_idx);
        let (xv, yv) = self.gather(&val_idx);
        Ok((
            Dataset::new(xt, yt, self.classes, Split::Train)?,
            Dataset::new(xv, yv, self.classes, Split::Validation)?,
        ))
    }

    /// Reads `label,f1,f2,...` lines after a header row.
    pub fn from_csv(path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(path)?;
        let rows = crate::csvio::parse_numeric_rows(&text, true)?;
        let first = rows.first().ok_or_else(|| Error::Parse {
            line: 2,
            column: 1,
            message: "dataset has no samples".into(),
        })?;
        if first.len() < 2 {
            return Err(Error::Parse {
                line: 2,
                column: 2,
                message: "expected a label followed by at least one feature".into(),
            });
        }
        let d = first.len() - 1;
        let mut labels = Vec::with_capacity(rows.len());
        let mut features = Matrix::zeros(d, rows.len());
        for (j, row) in rows.iter().enumerate() {
            let label = row[0];
            if label < 0.0 || label.fract() != 0.0 {
                return Err(Error::Parse {
                    line: j + 2,
                    column: 1,
                    message: format!("label {label} is not a non-negative integer"),
                });
            }
            labels.push(label as usize);
            for i in 0..d {
                features[(i, j)] = row[i + 1];
            }
        }
        let classes = labels.iter().max().map_or(0, |&m| m + 1).max(2);
        Dataset::new(features, labels, classes, Split::Train)
    }
}

/// Gaussian mixture with a shared, rotated covariance whose eigenvalues are
/// log-spaced over `[1/anisotropy, 1]`.
///
/// Class means are drawn in the whitened frame and mapped through the same
/// scaling, so every eigendirection carries a comparable share of the class
/// signal and the overall condition number stays close to `anisotropy`.
pub fn synth_data(seed: u64, n: usize, d_in: usize, classes: usize, anisotropy: f64) -> Result<Dataset> {
    synth_maps(seed, n, d_in, 1, classes, anisotropy)
}

/// Feature maps for covariance pooling: each sample holds `positions`
/// independent draws from its class distribution over `channels`, stored
/// channel-major (`x[c·positions + p]`), so `d_in = channels · positions`.
/// With one position this is [`synth_data`].
pub fn synth_maps(
    seed: u64,
    n: usize,
    channels: usize,
    positions: usize,
    classes: usize,
    anisotropy: f64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Size(format!("need at least two classes, got {classes}")));
    }
    if n < classes {
        return Err(Error::Size(format!("{n} samples cannot cover {classes} classes")));
    }
    if channels == 0 || positions == 0 {
        return Err(Error::Size("input dimension must be positive".into()));
    }
    if !(anisotropy >= 1.0 && anisotropy.is_finite()) {
        return Err(Error::Config(format!("anisotropy must be ≥ 1, got {anisotropy}")));
    }
    let mut rng = random::rng(seed);
    let rotation = random::orthogonal_matrix(&mut rng, channels);
    let stds: Vec<f64> = (0..channels)
        .map(|i| {
            let t = if channels == 1 { 0.0 } else { i as f64 / (channels - 1) as f64 };
            anisotropy.powf(-0.5 * t)
        })
        .collect();
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..channels).map(|_| MEAN_SCALE * random::gaussian(&mut rng)).collect())
        .collect();

    let mut latent = Matrix::zeros(channels, n * positions);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let label = j % classes;
        labels.push(label);
        for p in 0..positions {
            for i in 0..channels {
                latent[(i, j * positions + p)] = stds[i] * (means[label][i] + random::gaussian(&mut rng));
            }
        }
    }
    // Random order of classes; the permutation draws from the same stream.
    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        let r = rng.random_range(0..=k);
        order.swap(k, r);
    }
    let mixed = rotation.matmul(&latent);
    let features = Matrix::from_fn(channels * positions, n, |r, j| {
        let (c, p) = (r / positions, r % positions);
        mixed[(c, order[j] * positions + p)]
    });
    let labels = order.iter().map(|&k| labels[k]).collect();
    Dataset::new(features, labels, classes, Split::Train)
}

/// Class-mean spread in units of the within-class standard deviation.
const MEAN_SCALE: f64 = 0.6;
