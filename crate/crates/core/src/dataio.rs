//! Dataset loading: MNIST IDX files, a sparse `label idx:val ...` text
//! format, and seeded shuffles and splits.
//!
//! IDX files are big-endian: an image file is magic `2051`, count, rows,
//! cols, then `count · rows · cols` pixel bytes; a label file is magic
//! `2049`, count, then `count` label bytes. Pixels are scaled by `1/255`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Dense(Vec<f64>),
    /// `(index, value)` pairs with strictly ascending indices.
    Sparse(Vec<(usize, f64)>),
}

impl Features {
    pub fn to_dense(&self, n_features: usize) -> Vec<f64> {
        match self {
            Features::Dense(v) => v.clone(),
            Features::Sparse(entries) => {
                let mut v = vec![0.0; n_features];
                for &(i, x) in entries {
                    v[i] = x;
                }
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Features,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, n_features: usize, n_classes: usize) -> Result<Self> {
        for (k, s) in samples.iter().enumerate() {
            if s.label >= n_classes {
                return Err(Error::invalid(format!("sample {k}: label {} >= {n_classes} classes", s.label)));
            }
            match &s.features {
                Features::Dense(v) if v.len() != n_features => {
                    return Err(Error::invalid(format!("sample {k}: {} features, expected {n_features}", v.len())));
                }
                Features::Sparse(e) if e.iter().any(|&(i, _)| i >= n_features) => {
                    return Err(Error::invalid(format!("sample {k}: sparse index out of range")));
                }
                _ => {}
            }
        }
        Ok(Self {
            samples,
            n_features,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Densified features and label of sample `i`.
    pub fn dense_sample(&self, i: usize) -> (Vec<f64>, usize) {
        let s = &self.samples[i];
        (s.features.to_dense(self.n_features), s.label)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            n_features: self.n_features,
            n_classes: self.n_classes,
        }
    }

    /// The first `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            samples: self.samples[..n].to_vec(),
            n_features: self.n_features,
            n_classes: self.n_classes,
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::parse(path, format!("truncated header at byte {at}")))
}

/// Parse IDX image bytes into `(rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &str) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::parse(path, format!("image magic {magic}, expected {IDX_IMAGES_MAGIC}")));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() != count * size {
        return Err(Error::parse(
            path,
            format!("expected {} pixel bytes for {count} images of {rows}x{cols}, found {}", count * size, body.len()),
        ));
    }
    Ok((rows, cols, body.chunks(size.max(1)).take(count).map(<[u8]>::to_vec).collect()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &str) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::parse(path, format!("label magic {magic}, expected {IDX_LABELS_MAGIC}")));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::parse(path, format!("expected {count} label bytes, found {}", body.len())));
    }
    Ok(body.to_vec())
}

pub fn idx_images_bytes(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IDX_IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols);
        out.extend_from_slice(img);
    }
    out
}

pub fn idx_labels_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Load an MNIST-style image/label file pair. Labels must be 0–9.
pub fn load_mnist_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (ipath, lpath) = (images.as_ref(), labels.as_ref());
    let iname = ipath.display().to_string();
    let lname = lpath.display().to_string();
    let read = |p: &Path, name: &str| fs::read(p).map_err(|e| Error::parse(name, e.to_string()));
    let (rows, cols, pixels) = parse_idx_images(&read(ipath, &iname)?, &iname)?;
    let labels = parse_idx_labels(&read(lpath, &lname)?, &lname)?;
    if pixels.len() != labels.len() {
        return Err(Error::parse(
            &iname,
            format!("{} images but {} labels in {lname}", pixels.len(), labels.len()),
        ));
    }
    let samples = pixels
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(k, (px, label))| {
            if label > 9 {
                return Err(Error::parse(&lname, format!("label {label} at sample {k} outside 0-9")));
            }
            Ok(Sample {
                features: Features::Dense(px.iter().map(|&b| f64::from(b) / 255.0).collect()),
                label: label as usize,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, rows * cols, 10)
}

/// Parse the sparse text format: one sample per line, `label idx:val ...`
/// with strictly ascending indices. Blank lines and `#` comments are
/// skipped. Without `n_features`, the width is one past the largest index.
pub fn parse_sparse(text: &str, name: &str, n_features: Option<usize>) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut max_index = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |msg: String| Error::parse(name, format!("line {}: {msg}", lineno + 1));
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap();
        let label: usize = label_tok
            .parse()
            .map_err(|_| at(format!("bad label {label_tok:?}")))?;
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (i, v) = tok.split_once(':').ok_or_else(|| at(format!("expected idx:val, got {tok:?}")))?;
            let i: usize = i.parse().map_err(|_| at(format!("bad index in {tok:?}")))?;
            let v: f64 = v.parse().map_err(|_| at(format!("bad value in {tok:?}")))?;
            if !v.is_finite() {
                return Err(at(format!("non-finite value in {tok:?}")));
            }
            if let Some(&(prev, _)) = entries.last() {
                if i == prev {
                    return Err(at(format!("duplicate index {i}")));
                }
                if i < prev {
                    return Err(at(format!("index {i} after {prev}: indices must ascend")));
                }
            }
            if let Some(n) = n_features {
                if i >= n {
                    return Err(at(format!("index {i} out of range for {n} features")));
                }
            }
            entries.push((i, v));
        }
        if let Some(&(i, _)) = entries.last() {
            max_index = max_index.max(Some(i));
        }
        samples.push(Sample {
            features: Features::Sparse(entries),
            label,
        });
    }
    let n_features = n_features.unwrap_or_else(|| max_index.map_or(0, |i| i + 1));
    let n_classes = samples.iter().map(|s| s.label + 1).max().unwrap_or(0).max(2);
    Dataset::new(samples, n_features, n_classes)
}

pub fn load_sparse(path: impl AsRef<Path>, n_features: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::parse(&name, e.to_string()))?;
    parse_sparse(&text, &name, n_features)
}

/// Seeded permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Sample order for one training epoch; identical for the spiking and dense trainers.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    permutation(n, seed.wrapping_add(0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(epoch as u64 + 1)))
}

/// Shuffle with `seed`, then cut into `⌊n · ratio⌋` training samples and the rest.
pub fn split_and_shuffle(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let perm = permutation(dataset.len(), seed);
    let cut = (dataset.len() as f64 * ratio).floor() as usize;
    Ok((dataset.subset(&perm[..cut]), dataset.subset(&perm[cut..])))
}
