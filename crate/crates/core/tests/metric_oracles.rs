//! Metrics checked against per-sample and per-class recomputation.

mod common;

use common::{oracle_macro_f1, oracle_oa};
use hyperbench::metrics::{imbalance_ratio, long_tail_report, macro_f1, overall_accuracy, per_class_scores, ConfusionMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sample lists expanded from a random confusion matrix.
fn random_samples(rng: &mut ChaCha8Rng) -> (Vec<u32>, Vec<u32>, usize) {
    let c = rng.random_range(1..8);
    let n = rng.random_range(1..200);
    let truth: Vec<u32> = (0..n).map(|_| rng.random_range(1..=c as u32)).collect();
    let pred = truth.iter().map(|t| if rng.random_bool(0.6) { *t } else { rng.random_range(1..=c as u32) }).collect();
    (truth, pred, c)
}

#[test]
fn scores_match_oracles_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        let (t, p, c) = random_samples(&mut rng);
        let cm = ConfusionMatrix::from_labels(&t, &p, c).unwrap();
        assert_eq!(cm.total(), t.len() as u64);
        assert_eq!(overall_accuracy(&cm).unwrap(), oracle_oa(&t, &p));
        assert!((macro_f1(&cm).unwrap() - oracle_macro_f1(&t, &p, c)).abs() < 1e-12);
    }
}

#[test]
fn imbalance_and_long_tail_match_direct_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let h: Vec<u64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(1..1000)).collect();
        let ratio = *h.iter().max().unwrap() as f64 / *h.iter().min().unwrap() as f64;
        assert_eq!(imbalance_ratio(&h).unwrap(), ratio);
        let r = long_tail_report(&h).unwrap();
        assert!(r.sorted_counts.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(r.top1_share, *h.iter().max().unwrap() as f64 / h.iter().sum::<u64>() as f64);
        assert!((r.cumulative_share.last().unwrap() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_invariant_under_relabeling(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, p, c) = random_samples(&mut rng);
        let mut perm: Vec<u32> = (1..=c as u32).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let map = |v: &[u32]| v.iter().map(|l| perm[*l as usize - 1]).collect::<Vec<_>>();
        let a = ConfusionMatrix::from_labels(&t, &p, c).unwrap();
        let b = ConfusionMatrix::from_labels(&map(&t), &map(&p), c).unwrap();
        prop_assert_eq!(overall_accuracy(&a).unwrap(), overall_accuracy(&b).unwrap());
        prop_assert!((macro_f1(&a).unwrap() - macro_f1(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_is_one_only_when_diagonal(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, p, c) = random_samples(&mut rng);
        let cm = ConfusionMatrix::from_labels(&t, &p, c).unwrap();
        let f = macro_f1(&cm).unwrap();
        prop_assert!(f <= 1.0);
        prop_assert_eq!(f == 1.0, t == p);
        prop_assert!(per_class_scores(&cm).iter().all(|s| (0.0..=1.0).contains(&s.f1)));
    }

    #[test]
    fn imbalance_is_scale_invariant(h in proptest::collection::vec(1u64..500, 1..12), s in 1u64..50) {
        let scaled: Vec<u64> = h.iter().map(|v| v * s).collect();
        prop_assert!((imbalance_ratio(&h).unwrap() - imbalance_ratio(&scaled).unwrap()).abs() < 1e-12);
    }
}
