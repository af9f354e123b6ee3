//! Random forest of CART trees with Gini impurity.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax_smallest, ClassifierError, LabeledSet, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `round(sqrt(D))`.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, min_leaf: 2, max_features: None, max_depth: None, bootstrap: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Training-label counts, index `k` for class `k + 1`.
    Leaf { histogram: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> u32 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { histogram } => return argmax_smallest(histogram),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_classes: usize,
    pub dim: usize,
    pub max_features: usize,
    pub seed: u64,
}

pub fn rf_fit(train: &LabeledSet, config: &ForestConfig) -> Result<ForestModel> {
    let hist = train.histogram();
    if hist.iter().filter(|c| **c > 0).count() < 2 {
        return Err(ClassifierError::Fit("random forest needs at least two classes".into()));
    }
    if config.n_trees == 0 || config.min_leaf == 0 {
        return Err(ClassifierError::Fit("n_trees and min_leaf must be positive".into()));
    }
    let d = train.dim();
    let max_features = config.max_features.unwrap_or(((d as f64).sqrt().round() as usize).max(1)).clamp(1, d);
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(config.seed, &[0x5246, t as u64]);
            let rows: Vec<usize> = if config.bootstrap {
                (0..train.len()).map(|_| rng.random_range(0..train.len())).collect()
            } else {
                (0..train.len()).collect()
            };
            let mut b = Builder { data: train, config, max_features, nodes: Vec::new(), rng };
            b.grow(rows, 0);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel { trees, n_classes: train.n_classes(), dim: d, max_features, seed: config.seed })
}

/// Majority over trees, ties to the smallest class id.
pub fn rf_predict(model: &ForestModel, features: &[f64]) -> Result<Vec<u32>> {
    if features.len() % model.dim != 0 {
        return Err(ClassifierError::InvalidData(format!("feature length {} not a multiple of {}", features.len(), model.dim)));
    }
    Ok(features
        .par_chunks(model.dim)
        .map(|x| {
            let mut votes = vec![0u32; model.n_classes];
            for t in &model.trees {
                votes[t.predict(x) as usize - 1] += 1;
            }
            argmax_smallest(&votes)
        })
        .collect())
}

struct Builder<'a, R> {
    data: &'a LabeledSet,
    config: &'a ForestConfig,
    max_features: usize,
    nodes: Vec<Node>,
    rng: R,
}

fn gini(counts: &[u32], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|c| (*c as f64 / n).powi(2)).sum::<f64>()
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let c = self.data.n_classes();
        let mut histogram = vec![0u32; c];
        for &r in &rows {
            histogram[self.data.labels()[r] as usize - 1] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { histogram: histogram.clone() });
        let pure = histogram.iter().filter(|h| **h > 0).count() <= 1;
        let depth_capped = self.config.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_capped || rows.len() < 2 * self.config.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, &histogram) else { return id };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.data.row(i)[feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    /// Lowest weighted child Gini over a random feature subset; both children
    /// keep at least `min_leaf` rows. Thresholds are midpoints between
    /// consecutive distinct values.
    fn best_split(&mut self, rows: &[usize], parent: &[u32]) -> Option<(usize, f64)> {
        let d = self.data.dim();
        let n = rows.len() as u32;
        let min_leaf = self.config.min_leaf;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted: Vec<(f64, u32)> = Vec::with_capacity(rows.len());
        for feature in index::sample(&mut self.rng, d, self.max_features) {
            sorted.clear();
            sorted.extend(rows.iter().map(|&i| (self.data.row(i)[feature], self.data.labels()[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0u32; parent.len()];
            let mut right = parent.to_vec();
            for s in 0..sorted.len() - 1 {
                let k = sorted[s].1 as usize - 1;
                left[k] += 1;
                right[k] -= 1;
                let nl = s + 1;
                if sorted[s].0 == sorted[s + 1].0 || nl < min_leaf || sorted.len() - nl < min_leaf {
                    continue;
                }
                let nl = nl as u32;
                let score = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                if best.is_none_or(|b| score < b.0) {
                    let threshold = sorted[s].0 + (sorted[s + 1].0 - sorted[s].0) / 2.0;
                    best = Some((score, feature, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::SplitSet;

    fn set(x: Vec<f64>, d: usize, y: Vec<u32>, c: usize) -> LabeledSet {
        LabeledSet::new(x, d, y, c, SplitSet::Train).unwrap()
    }

    #[test]
    fn single_class_is_a_fit_error() {
        let t = set(vec![0.0, 1.0, 2.0], 1, vec![1, 1, 1], 2);
        assert!(matches!(rf_fit(&t, &ForestConfig::default()), Err(ClassifierError::Fit(_))));
    }

    #[test]
    fn duplicates_predict_majority() {
        let t = set(vec![1.0; 5], 1, vec![2, 2, 1, 2, 1], 2);
        let m = rf_fit(&t, &ForestConfig { n_trees: 1, bootstrap: false, ..Default::default() }).unwrap();
        assert_eq!(m.trees[0].nodes.len(), 1);
        assert_eq!(rf_predict(&m, &[1.0]).unwrap(), vec![2]);
    }

    #[test]
    fn leaf_histograms_sum_to_samples() {
        let x: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64).collect();
        let y: Vec<u32> = (0..20).map(|i| (i % 3) as u32 + 1).collect();
        let t = set(x, 2, y, 3);
        let m = rf_fit(&t, &ForestConfig { n_trees: 3, seed: 4, ..Default::default() }).unwrap();
        for tree in &m.trees {
            let leaves: u32 = tree.nodes.iter().map(|n| if let Node::Leaf { histogram } = n { histogram.iter().sum() } else { 0 }).sum();
            assert_eq!(leaves, 20);
        }
        assert_eq!(m, rf_fit(&t, &ForestConfig { n_trees: 3, seed: 4, ..Default::default() }).unwrap());
    }
}
