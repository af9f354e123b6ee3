//! Downstream evaluation heads: brute-force KNN, a CART random forest, an
//! MLP probe over frozen extractors, and the uniform-chance macro-F1 oracle.

mod chance;
mod extractor;
mod forest;
mod knn;
mod probe;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chance::{chance_f1_oracle, ChanceEstimate};
pub use extractor::{Extractor, Identity, RandomExtractor, RandomExtractorKind};
pub use forest::{rf_fit, rf_predict, ForestConfig, ForestModel, Node, Tree};
pub use knn::{knn_fit_predict, DEFAULT_K};
pub use probe::{mlp_probe, ProbeConfig, ProbeResult};

use crate::split::SplitSet;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("fit error: {0}")]
    Fit(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

/// Row-major `N x D` features with class labels in `1..=n_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<u32>,
    n_classes: usize,
    pub tag: SplitSet,
}

impl LabeledSet {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<u32>, n_classes: usize, tag: SplitSet) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(ClassifierError::InvalidData(format!("{} values for {} rows of dimension {dim}", features.len(), labels.len())));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::InvalidData(format!("non-finite feature in row {}", i / dim)));
        }
        if let Some(l) = labels.iter().find(|l| **l == 0 || **l as usize > n_classes) {
            return Err(ClassifierError::InvalidData(format!("label {l} outside 1..={n_classes}")));
        }
        Ok(Self { features, dim, labels, n_classes, tag })
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

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn histogram(&self) -> Vec<u64> {
        let mut h = vec![0; self.n_classes];
        for &l in &self.labels {
            h[l as usize - 1] += 1;
        }
        h
    }

    /// Same labels, features passed through `extractor`.
    pub fn map_features(&self, extractor: &dyn Extractor) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..self.len()).map(|i| extractor.extract(self.row(i))).collect();
        Self::new(rows.concat(), extractor.output_dim(), self.labels.clone(), self.n_classes, self.tag)
    }
}

/// Class with the most votes, ties to the smallest id. `votes[k]` counts class `k + 1`.
pub(crate) fn argmax_smallest(votes: &[u32]) -> u32 {
    let mut best = 0;
    for (k, v) in votes.iter().enumerate() {
        if *v > votes[best] {
            best = k;
        }
    }
    best as u32 + 1
}
