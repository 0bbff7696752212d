//! Datasets, synthetic generators and chunk streams.

mod io;
mod stream;
mod synthetic;

pub use io::{read_csv, read_csv_str, read_idx, read_idx_bytes};
pub use stream::{
    build_balanced_stream, build_task_stream, build_unbalanced_stream, largest_feasible_chunk_size,
    split_train_test,
};
pub use synthetic::{gaussian_blobs, regression_chunks, RegressionChunk, RegressionChunkSet, RegressionSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense labeled classification dataset, features stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    /// Builds a dataset, checking that the label range is covered exactly.
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let ds = Self::from_parts(features, dim, labels, class_count)?;
        if !ds.is_empty() {
            let counts = ds.class_counts();
            if let Some(missing) = counts.iter().position(|&c| c == 0) {
                return Err(Error::invalid(format!("class {missing} has no examples")));
            }
        }
        Ok(ds)
    }

    /// Like [`LabeledDataset::new`] but allows classes without examples.
    pub(crate) fn from_parts(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                context: "dataset rows vs labels",
                expected: labels.len() * dim,
                got: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::invalid(format!("label {bad} outside [0, {class_count})")));
        }
        Ok(Self { features, dim, labels, class_count })
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

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of each class, ascending within a class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Copies the rows at `indices` (in that order) into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("index {i} out of range for {} rows", self.len())));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::from_parts(features, self.dim, labels, self.class_count)
    }

    /// Gathers rows into caller-provided buffers (cleared first).
    pub fn gather(&self, indices: &[usize], features: &mut Vec<f64>, labels: &mut Vec<usize>) {
        features.clear();
        labels.clear();
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamMode {
    IidBalanced,
    IidUnbalanced,
    ClassIncremental,
}

impl StreamMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamMode::IidBalanced => "iid-balanced",
            StreamMode::IidUnbalanced => "iid-unbalanced",
            StreamMode::ClassIncremental => "class-incremental",
        }
    }
}

/// Ordered, pairwise disjoint chunks of indices into a training set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkStream {
    pub chunks: Vec<Vec<usize>>,
    pub mode: StreamMode,
    pub seed: u64,
}

impl ChunkStream {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunk(&self, i: usize) -> &[usize] {
        &self.chunks[i]
    }

    pub fn total_len(&self) -> usize {
        self.chunks.iter().map(Vec::len).sum()
    }

    /// Checks that the chunks partition `0..n` exactly.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut all: Vec<usize> = self.chunks.iter().flatten().copied().collect();
        all.sort_unstable();
        all.len() == n && all.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// Per-chunk class histogram.
    pub fn class_counts(&self, dataset: &LabeledDataset) -> Vec<Vec<usize>> {
        self.chunks
            .iter()
            .map(|c| {
                let mut counts = vec![0; dataset.class_count()];
                for &i in c {
                    counts[dataset.label(i)] += 1;
                }
                counts
            })
            .collect()
    }
}
