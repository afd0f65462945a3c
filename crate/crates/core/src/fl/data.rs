//! Labelled datasets: in-memory representation, MNIST IDX reader and a
//! Gaussian-blob generator for tests and desk-scale runs.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f32>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f32>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::Domain(format!("need at least 2 classes, got {n_classes}")));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Domain(format!("label {bad} outside 0..{n_classes}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// First `n` rows (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Rows of `indices` as an `f64` matrix.
    pub fn batch(&self, indices: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((indices.len(), self.n_features()));
        for (mut row, &i) in out.outer_iter_mut().zip(indices) {
            row.iter_mut()
                .zip(self.features.row(i))
                .for_each(|(o, &v)| *o = f64::from(v));
        }
        out
    }

    /// Concatenates datasets with identical shape.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let parts: Vec<&Dataset> = parts.into_iter().collect();
        let first = parts
            .first()
            .ok_or_else(|| Error::Domain("cannot concatenate zero datasets".into()))?;
        for p in &parts {
            if p.n_features() != first.n_features() || p.n_classes != first.n_classes {
                return Err(Error::Shape("datasets differ in shape".into()));
            }
        }
        let views: Vec<_> = parts.iter().map(|p| p.features.view()).collect();
        let features = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let labels = parts.iter().flat_map(|p| p.labels.iter().copied()).collect();
        Ok(Dataset {
            features,
            labels,
            n_classes: first.n_classes,
        })
    }

    /// Replaces the feature matrix, keeping labels. Values are clamped to [0, 1].
    pub fn with_features(&self, values: &[f64]) -> Result<Dataset> {
        if values.len() != self.features.len() {
            return Err(Error::Shape(format!(
                "{} values for {} features",
                values.len(),
                self.features.len()
            )));
        }
        let features = Array2::from_shape_vec(
            self.features.raw_dim(),
            values.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect(),
        )
        .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Dataset {
            features,
            labels: self.labels.clone(),
            n_classes: self.n_classes,
        })
    }

    /// Feature matrix flattened row-major as `f64`.
    pub fn flat_features(&self) -> Vec<f64> {
        self.features.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Gaussian class blobs clipped to the unit hypercube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_features: usize,
    pub samples_per_class: usize,
    pub test_samples_per_class: usize,
    /// Per-dimension standard deviation around each class centre.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 10,
            n_features: 64,
            samples_per_class: 600,
            test_samples_per_class: 100,
            noise_sd: 0.35,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self, section: &str) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::config(format!("{section}.n_classes"), "must be at least 2"));
        }
        for (name, v) in [
            ("n_features", self.n_features),
            ("samples_per_class", self.samples_per_class),
            ("test_samples_per_class", self.test_samples_per_class),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{section}.{name}"), "must be at least 1"));
            }
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::config(format!("{section}.noise_sd"), "must be non-negative"));
        }
        Ok(())
    }

    fn centres(&self) -> Array2<f64> {
        let mut rng = substream(self.seed, Stream::Dataset, &[0]);
        Array2::from_shape_fn((self.n_classes, self.n_features), |_| rng.random_range(0.25..0.75))
    }

    fn draw(&self, per_class: usize, split: u64) -> Dataset {
        let centres = self.centres();
        let mut rng = substream(self.seed, Stream::Dataset, &[split]);
        let noise = Normal::new(0.0, self.noise_sd).expect("validated noise_sd");
        let n = per_class * self.n_classes;
        // Classes interleaved so any prefix stays balanced.
        let labels: Vec<usize> = (0..n).map(|i| i % self.n_classes).collect();
        let mut features = Array2::<f32>::zeros((n, self.n_features));
        for (mut row, &y) in features.outer_iter_mut().zip(&labels) {
            for (v, c) in row.iter_mut().zip(centres.row(y)) {
                *v = (c + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32;
            }
        }
        Dataset {
            features,
            labels,
            n_classes: self.n_classes,
        }
    }

    pub fn train(&self) -> Dataset {
        self.draw(self.samples_per_class, 1)
    }

    pub fn test(&self) -> Dataset {
        self.draw(self.test_samples_per_class, 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    fn prefix(self) -> &'static str {
        match self {
            MnistSplit::Train => "train",
            MnistSplit::Test => "t10k",
        }
    }
}

pub fn mnist_paths(dir: &Path, split: MnistSplit) -> (PathBuf, PathBuf) {
    let p = split.prefix();
    (
        dir.join(format!("{p}-images-idx3-ubyte")),
        dir.join(format!("{p}-labels-idx1-ubyte")),
    )
}

fn read_u32_be(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::Format {
        path: path.to_owned(),
        reason: format!("truncated header: {e}"),
    })?;
    Ok(u32::from_be_bytes(buf))
}

fn open_idx(path: &Path, magic: u32) -> Result<BufReader<File>> {
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::Format {
        path: path.to_owned(),
        reason: e.to_string(),
    })?);
    let found = read_u32_be(&mut r, path)?;
    if found != magic {
        return Err(Error::Format {
            path: path.to_owned(),
            reason: format!("bad magic {found:#010x}, expected {magic:#010x}"),
        });
    }
    Ok(r)
}

fn read_body(r: &mut impl Read, len: usize, path: &Path) -> Result<Vec<u8>> {
    let mut data = vec![0u8; len];
    r.read_exact(&mut data).map_err(|e| Error::Format {
        path: path.to_owned(),
        reason: format!("truncated body: {e}"),
    })?;
    Ok(data)
}

/// Reads an IDX image file, scaling bytes to [0, 1]. At most `limit` images
/// are read.
pub fn read_idx_images(path: &Path, limit: Option<usize>) -> Result<Array2<f32>> {
    let mut r = open_idx(path, IDX_IMAGES_MAGIC)?;
    let count = read_u32_be(&mut r, path)? as usize;
    let rows = read_u32_be(&mut r, path)? as usize;
    let cols = read_u32_be(&mut r, path)? as usize;
    let n = limit.map_or(count, |l| l.min(count));
    let raw = read_body(&mut r, n * rows * cols, path)?;
    let scaled = raw.into_iter().map(|b| f32::from(b) / 255.0).collect();
    Array2::from_shape_vec((n, rows * cols), scaled).map_err(|e| Error::Format {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

pub fn read_idx_labels(path: &Path, limit: Option<usize>) -> Result<Vec<usize>> {
    let mut r = open_idx(path, IDX_LABELS_MAGIC)?;
    let count = read_u32_be(&mut r, path)? as usize;
    let n = limit.map_or(count, |l| l.min(count));
    Ok(read_body(&mut r, n, path)?.into_iter().map(usize::from).collect())
}

/// Loads one MNIST split from the four standard uncompressed IDX files.
pub fn load_mnist(dir: &Path, split: MnistSplit, limit: Option<usize>) -> Result<Dataset> {
    let (images, labels) = mnist_paths(dir, split);
    let features = read_idx_images(&images, limit)?;
    let labels = read_idx_labels(&labels, limit)?;
    Dataset::new(features, labels, 10)
}
