//! Macro-F1 of a classifier that predicts uniformly at random.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{macro_f1, ConfusionMatrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChanceEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

const TRIALS_PER_CHUNK: usize = 256;

/// Monte-Carlo estimate over `n_trials` uniform labelings of a test set with
/// class histogram `histogram` (index `k` is class `k + 1`) and `c` possible
/// predictions.
pub fn chance_f1_oracle(histogram: &[u64], c: usize, n_trials: usize, seed: u64) -> ChanceEstimate {
    assert!(histogram.iter().sum::<u64>() > 0, "chance oracle needs a nonempty histogram");
    assert!(c >= histogram.len() && n_trials > 0);
    let n_chunks = n_trials.div_ceil(TRIALS_PER_CHUNK);
    let sums: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = rng::stream(seed, &[0x4348, chunk as u64]);
            let trials = TRIALS_PER_CHUNK.min(n_trials - chunk * TRIALS_PER_CHUNK);
            let mut s = (0.0, 0.0);
            let mut counts = vec![0u64; c * c];
            for _ in 0..trials {
                counts.iter_mut().for_each(|v| *v = 0);
                for (t, &n) in histogram.iter().enumerate() {
                    for _ in 0..n {
                        counts[t * c + rng.random_range(0..c)] += 1;
                    }
                }
                let f = macro_f1(&ConfusionMatrix::from_counts(c, counts.clone())).expect("nonempty histogram");
                s.0 += f;
                s.1 += f * f;
            }
            s
        })
        .collect();
    let (sum, sq) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = n_trials as f64;
    let mean = sum / n;
    let var = if n_trials > 1 { ((sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    ChanceEstimate { mean, std_error: (var / n).sqrt(), trials: n_trials }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_is_always_right() {
        let e = chance_f1_oracle(&[17], 1, 50, 0);
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn balanced_pair_is_about_half() {
        let e = chance_f1_oracle(&[500, 500], 2, 2000, 1);
        assert!((e.mean - 0.5).abs() < 0.01, "{e:?}");
        assert_eq!(e, chance_f1_oracle(&[500, 500], 2, 2000, 1));
    }
}
