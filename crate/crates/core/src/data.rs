//! Datasets: MNIST IDX loading, synthetic gaussian blobs, splitting.

use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use thiserror::Error;

use crate::numerics::Prng;
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
const MNIST_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("trailing data in {path}: expected {expected} bytes, found {found}")]
    TrailingData {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} of sample {index} is not a digit class")]
    InvalidLabel { index: usize, label: u8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, num_classes: usize, feature_dim: usize) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != feature_dim {
                return Err(Error::config(
                    "dataset",
                    format!(
                        "sample {i} has {} features, expected {feature_dim}",
                        s.features.len()
                    ),
                ));
            }
            if s.label >= num_classes {
                return Err(Error::config(
                    "dataset",
                    format!("sample {i} has label {} >= {num_classes}", s.label),
                ));
            }
        }
        Ok(Self {
            samples,
            num_classes,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The first `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        Dataset {
            samples: self.samples.iter().take(n).cloned().collect(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
        }
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for s in &self.samples {
            h[s.label] += 1;
        }
        h
    }

    /// Seeded permutation, then `floor(n * test_fraction)` samples go to the
    /// test split and the remainder to the train split. Returns `(train, test)`.
    pub fn split_shuffle(&self, test_fraction: f64, rng: &mut Prng) -> Result<(Dataset, Dataset)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::config("test_fraction", "must lie in (0, 1)"));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut order);
        let n_test = (self.len() as f64 * test_fraction).floor() as usize;
        let pick = |idx: &[usize]| Dataset {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
        };
        let (test_idx, train_idx) = order.split_at(n_test);
        Ok((pick(train_idx), pick(test_idx)))
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, IdxError> {
    let io_err = |source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = fs::read(path).map_err(io_err)?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn check_len(path: &Path, bytes: &[u8], expected: usize) -> Result<(), IdxError> {
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IdxError::TrailingData {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(())
}

fn check_magic(path: &Path, bytes: &[u8], header: usize, expected: u32) -> Result<(), IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            path: path.to_path_buf(),
            expected: header,
            found: bytes.len(),
        });
    }
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(IdxError::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    if bytes.len() < header {
        return Err(IdxError::Truncated {
            path: path.to_path_buf(),
            expected: header,
            found: bytes.len(),
        });
    }
    Ok(())
}

/// Parses an IDX3 image file into flattened pixel rows scaled to `[0, 1]`.
pub fn read_idx_images(path: &Path) -> Result<(Vec<Vec<f64>>, usize, usize), IdxError> {
    let bytes = read_maybe_gz(path)?;
    check_magic(path, &bytes, 16, IDX_IMAGES_MAGIC)?;
    let count = be_u32(&bytes, 4) as usize;
    let rows = be_u32(&bytes, 8) as usize;
    let cols = be_u32(&bytes, 12) as usize;
    let pixels = rows * cols;
    check_len(path, &bytes, 16 + count * pixels)?;
    let images = bytes[16..]
        .chunks_exact(pixels.max(1))
        .take(count)
        .map(|img| img.iter().map(|&p| f64::from(p) / 255.0).collect())
        .collect();
    Ok((images, rows, cols))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, IdxError> {
    let bytes = read_maybe_gz(path)?;
    check_magic(path, &bytes, 8, IDX_LABELS_MAGIC)?;
    let count = be_u32(&bytes, 4) as usize;
    check_len(path, &bytes, 8 + count)?;
    Ok(bytes[8..].to_vec())
}

/// Loads an MNIST-style image/label file pair. Either file may be gzipped.
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset, IdxError> {
    let (images, rows, cols) = read_idx_images(images_path.as_ref())?;
    let labels = read_idx_labels(labels_path.as_ref())?;
    if images.len() != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let samples = images
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(index, (features, label))| {
            if usize::from(label) >= MNIST_CLASSES {
                return Err(IdxError::InvalidLabel { index, label });
            }
            Ok(Sample {
                features,
                label: usize::from(label),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        samples,
        num_classes: MNIST_CLASSES,
        feature_dim: rows * cols,
    })
}

/// Writes `dataset` as an uncompressed IDX pair. Features are mapped back to
/// bytes with `round(255 * x)`, so `[0, 1]` pixel data written by this
/// function reads back unchanged.
pub fn write_idx(
    dataset: &Dataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<(), IdxError> {
    assert_eq!(
        rows * cols,
        dataset.feature_dim,
        "rows * cols must equal feature_dim"
    );
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.len() * dataset.feature_dim);
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&n.to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    let mut lab = Vec::with_capacity(8 + dataset.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    for s in &dataset.samples {
        img.extend(
            s.features
                .iter()
                .map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8),
        );
        lab.push(s.label as u8);
    }
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    fs::write(images_path, img).map_err(|source| IdxError::Io {
        path: images_path.to_path_buf(),
        source,
    })?;
    fs::write(labels_path, lab).map_err(|source| IdxError::Io {
        path: labels_path.to_path_buf(),
        source,
    })
}

/// Distance of every blob center from the origin.
const BLOB_SEPARATION: f64 = 5.0;

/// Gaussian blobs with unit variance around fixed axis-aligned centers,
/// standardized per feature afterwards.
///
/// Class `c` sits on axis `c % dim` with sign alternating every `dim`
/// classes; classes beyond `2 * dim` move further out. Labels cycle
/// `0, 1, .., classes - 1`, so class sizes differ by at most one.
pub fn synth_blobs(n: usize, classes: usize, dim: usize, rng: &mut Prng) -> Result<Dataset> {
    if classes < 2 || n < classes || dim == 0 {
        return Err(Error::config(
            "dataset",
            format!("synth_blobs needs n >= classes >= 2 and dim >= 1 (n={n}, classes={classes}, dim={dim})"),
        ));
    }
    let center = |c: usize| -> Vec<f64> {
        let mut v = vec![0.0; dim];
        let sign = if (c / dim).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        let ring = (c / (2 * dim)) as f64;
        v[c % dim] = sign * BLOB_SEPARATION * (1.0 + ring);
        v
    };
    let mut samples: Vec<Sample> = (0..n)
        .map(|i| {
            let label = i % classes;
            let features = center(label)
                .into_iter()
                .map(|m| m + rng.next_gaussian())
                .collect();
            Sample { features, label }
        })
        .collect();

    for j in 0..dim {
        let mean = samples.iter().map(|s| s.features[j]).sum::<f64>() / n as f64;
        let var = samples
            .iter()
            .map(|s| (s.features[j] - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        for s in &mut samples {
            s.features[j] = (s.features[j] - mean) / std;
        }
    }
    Ok(Dataset {
        samples,
        num_classes: classes,
        feature_dim: dim,
    })
}
