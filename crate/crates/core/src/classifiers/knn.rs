use rayon::prelude::*;

use super::{argmax_smallest, ClassifierError, LabeledSet, Result};

pub const DEFAULT_K: usize = 5;

/// Brute-force Euclidean k-nearest neighbours with a majority vote.
/// Equidistant neighbours are taken in training order; vote ties go to the
/// smallest class id.
pub fn knn_fit_predict(train: &LabeledSet, queries: &[f64], k: usize) -> Result<Vec<u32>> {
    if train.is_empty() {
        return Err(ClassifierError::Fit("empty training set".into()));
    }
    if k == 0 || k > train.len() {
        return Err(ClassifierError::Fit(format!("k = {k} with {} training rows", train.len())));
    }
    let d = train.dim();
    if queries.len() % d != 0 {
        return Err(ClassifierError::InvalidData(format!("query length {} not a multiple of {d}", queries.len())));
    }
    Ok(queries
        .par_chunks(d)
        .map(|q| {
            let mut dist: Vec<(f64, usize)> = (0..train.len())
                .map(|i| (train.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
                .collect();
            dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = vec![0u32; train.n_classes()];
            for &(_, i) in &dist[..k] {
                votes[train.labels()[i] as usize - 1] += 1;
            }
            argmax_smallest(&votes)
        })
        .collect())
}
