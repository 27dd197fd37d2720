//! Biased datasets: Colored-MNIST family, a Gaussian toy, MNIST ingestion
//! and the on-disk container.

mod colored;
mod container;
mod gaussian;
mod glyphs;
mod idx;

use std::path::PathBuf;

use thiserror::Error;

pub use colored::{default_palette, make_colored_mnist, ColoredConfig, Palette, DEFAULT_PALETTE, EXTRA_COLOR};
pub use container::{load_dataset, manifest_csv, read_dataset, save_dataset, write_dataset, MAGIC};
pub use gaussian::{make_gaussian_toy, GaussianConfig};
pub use glyphs::{synthetic_digits, GLYPH_SIDE};
pub use idx::{load_idx, load_mnist_dir, parse_idx_images, parse_idx_labels};

use crate::debias::{CorrelationTopology, DebiasError};
use crate::metrics::Group;
use crate::numerics::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("expected {expected} magic 0x{expected_magic:08x} at byte 0, found 0x{found:08x}")]
    BadMagic {
        expected: &'static str,
        expected_magic: u32,
        found: u32,
    },
    #[error("payload truncated at byte {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("dimension sizes overflow at byte {offset}")]
    DimensionOverflow { offset: usize },
    #[error("unsupported container version {0:?}")]
    Version(String),
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("palette has {palette} colors but the topology needs {attrs}")]
    Palette { palette: usize, attrs: usize },
    #[error("minority ratio must lie in (0, 1), got {0}")]
    Ratio(f64),
    #[error("{0}")]
    Topology(#[from] DebiasError),
    #[error("topology {0} cannot be stored in the container")]
    UnsupportedTopology(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("image count {images} differs from label count {labels}")]
    CountMismatch { images: usize, labels: usize },
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train = 0,
    Test = 1,
}

impl Split {
    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(Self::Train),
            1 => Some(Self::Test),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Test => "test",
        }
    }
}

/// Where the images of a dataset came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    Mnist,
    /// Procedural glyphs used when MNIST files are unavailable.
    SyntheticGlyphs,
    Gaussian,
    /// Read back from a container, which does not record provenance.
    Unknown,
}

impl DataSource {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mnist => "mnist",
            Self::SyntheticGlyphs => "synthetic-glyphs",
            Self::Gaussian => "gaussian",
            Self::Unknown => "unknown",
        }
    }
}

/// Grayscale digit images with labels, `n × 784` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DigitSet {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub source: DataSource,
}

/// Features, labels, attributes and split flags for every sample.
///
/// Train-split attributes are kept for post-hoc diagnostics only; the
/// trainer-facing [`BiasedDataset::train_split`] does not carry them.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasedDataset {
    pub(crate) features: Vec<f32>,
    pub(crate) labels: Vec<usize>,
    pub(crate) attrs: Vec<usize>,
    pub(crate) splits: Vec<Split>,
    pub(crate) dim: usize,
    pub(crate) topology: CorrelationTopology,
    pub(crate) ratio: f32,
    pub(crate) source: DataSource,
}

/// Trainer-facing view: inputs and labels only.
#[derive(Clone, Debug)]
pub struct TrainSplit {
    pub x: Tensor<f32>,
    pub y: Vec<usize>,
}

/// Evaluation view with exposed attributes.
#[derive(Clone, Debug)]
pub struct TestSplit {
    pub x: Tensor<f32>,
    pub y: Vec<usize>,
    pub a: Vec<usize>,
}

impl TestSplit {
    pub fn groups(&self) -> Vec<Group> {
        self.y.iter().copied().zip(self.a.iter().copied()).collect()
    }
}

impl BiasedDataset {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        features: Vec<f32>,
        labels: Vec<usize>,
        attrs: Vec<usize>,
        splits: Vec<Split>,
        dim: usize,
        topology: CorrelationTopology,
        ratio: f32,
        source: DataSource,
    ) -> Result<Self, DataError> {
        let n = labels.len();
        if dim == 0 || features.len() != n * dim || attrs.len() != n || splits.len() != n {
            return Err(DataError::Param(format!(
                "inconsistent sample arrays: {} features for {n} samples of width {dim}",
                features.len()
            )));
        }
        let (classes, k) = (topology.classes(), topology.attrs());
        if let Some(i) = (0..n).find(|&i| labels[i] >= classes || attrs[i] >= k) {
            return Err(DataError::Param(format!(
                "sample {i} has group ({}, {}) outside {classes} x {k}",
                labels[i], attrs[i]
            )));
        }
        Ok(Self {
            features,
            labels,
            attrs,
            splits,
            dim,
            topology,
            ratio,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.topology.classes()
    }

    pub fn attrs(&self) -> usize {
        self.topology.attrs()
    }

    pub fn topology(&self) -> &CorrelationTopology {
        &self.topology
    }

    pub fn ratio(&self) -> f32 {
        self.ratio
    }

    pub fn source(&self) -> DataSource {
        self.source
    }

    pub fn with_source(mut self, source: DataSource) -> Self {
        self.source = source;
        self
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn attr(&self, i: usize) -> usize {
        self.attrs[i]
    }

    pub fn split(&self, i: usize) -> Split {
        self.splits[i]
    }

    /// `y·K + a`.
    pub fn group_id(&self, i: usize) -> usize {
        self.labels[i] * self.attrs() + self.attrs[i]
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    fn gather(&self, idx: &[usize]) -> Tensor<f32> {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.feature(i));
        }
        Tensor::new(vec![idx.len(), self.dim], data).expect("gathered rows match shape")
    }

    pub fn train_split(&self) -> TrainSplit {
        let idx = self.indices(Split::Train);
        TrainSplit {
            x: self.gather(&idx),
            y: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// True attributes of the train split, in train order. Diagnostics only.
    pub fn train_attrs_for_diagnostics(&self) -> Vec<usize> {
        self.indices(Split::Train).iter().map(|&i| self.attrs[i]).collect()
    }

    pub fn test_split(&self) -> TestSplit {
        let idx = self.indices(Split::Test);
        TestSplit {
            x: self.gather(&idx),
            y: idx.iter().map(|&i| self.labels[i]).collect(),
            a: idx.iter().map(|&i| self.attrs[i]).collect(),
        }
    }

    /// Fraction of train samples whose attribute is not aligned with the label.
    pub fn minority_fraction(&self, split: Split) -> f64 {
        let idx = self.indices(split);
        let minority = idx
            .iter()
            .filter(|&&i| !self.topology.is_aligned(self.labels[i], self.attrs[i]))
            .count();
        minority as f64 / idx.len() as f64
    }

    /// Sample count per `(y, a)` cell of a split, row-major `L × K`.
    pub fn group_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.classes() * self.attrs()];
        for i in self.indices(split) {
            counts[self.group_id(i)] += 1;
        }
        counts
    }

    /// FNV-1a 64 over the serialized container bytes.
    pub fn checksum(&self) -> Result<u64, DataError> {
        let mut bytes = Vec::new();
        write_dataset(self, &mut bytes)?;
        Ok(fnv1a(&bytes))
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Rejects ratios outside the open unit interval.
pub fn check_ratio(ratio: f64) -> Result<(), DataError> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(DataError::Ratio(ratio))
    }
}
