//! Patch descriptor checked against direct recomputation.

mod common;

use std::f64::consts::PI;

use common::{direct_gabor, mirror_pad, scene_from_image};
use hyperbench::features::{
    extract_patch_feature, gabor_responses, patch_statistics, FeatureConfig, GaborBank, SpectralIndexDef, compute_spectral_index,
};
use hyperbench::scene::{HyperspectralScene, SpectralAxis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn mirror_pad_matches_half_sample_symmetry() {
    let img: Vec<f64> = (0..9).map(|v| v as f64).collect();
    let (p, m) = mirror_pad(&img, 3, 2);
    assert_eq!(m, 7);
    assert_eq!(&p[2 * 7..3 * 7], &[1.0, 0.0, 0.0, 1.0, 2.0, 2.0, 1.0]);
    assert_eq!(p[0], 4.0);
}

#[test]
fn gabor_matches_direct_convolution() {
    let n = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
    let bank = GaborBank::for_gsd(1.0).unwrap();
    let fast = gabor_responses(&scene_from_image(&img, n), &bank);
    let filters = bank.filters();
    // One orientation per frequency plus a diagonal keeps the O(n^2 r^2) oracle quick.
    for (i, f) in filters.iter().enumerate().filter(|(i, _)| i % 6 == 0 || *i == 23) {
        let oracle = direct_gabor(&img.iter().map(|v| *v as f32 as f64).collect::<Vec<_>>(), n, f.frequency, f.theta, f.sigma, f.radius);
        let scale = oracle.iter().fold(0.0f64, |a, b| a.max(*b));
        for (a, b) in fast[i].iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3 * scale), "filter {i}: {a} vs {b}");
        }
    }
}

fn grating(n: usize, f: f64, theta: f64) -> Vec<f64> {
    (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as f64, (i % n) as f64);
            0.5 + 0.4 * (2.0 * PI * f * (x * theta.cos() + y * theta.sin())).cos()
        })
        .collect()
}

fn strongest(maps: &[Vec<f64>]) -> usize {
    let means: Vec<f64> = maps.iter().map(|m| m.iter().sum::<f64>() / m.len() as f64).collect();
    (0..means.len()).max_by(|&a, &b| means[a].total_cmp(&means[b])).unwrap()
}

#[test]
fn grating_selects_matching_filter() {
    let bank = GaborBank::for_gsd(1.0).unwrap();
    let filters = bank.filters();
    for fi in 1..4 {
        for oi in [0, 1, 2] {
            let target = &filters[fi * 6 + oi];
            let g = grating(64, target.frequency, target.theta);
            let best = strongest(&gabor_responses(&scene_from_image(&g, 64), &bank));
            assert_eq!(best, fi * 6 + oi);
            let rotated = grating(64, target.frequency, target.theta + PI / 2.0);
            let best = strongest(&gabor_responses(&scene_from_image(&rotated, 64), &bank));
            assert_eq!(best, fi * 6 + (oi + 3) % 6);
        }
    }
}

#[test]
fn rotating_patch_180_degrees_keeps_statistics() {
    let cfg = FeatureConfig::for_gsd(1.0).unwrap();
    let axis = SpectralAxis::linear(0.43, 0.86, 103).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cube: Vec<f32> = (0..64 * 64 * 103).map(|_| rng.random_range(0.0..0.6)).collect();
    let mut rot = vec![0.0f32; cube.len()];
    for p in 0..64 * 64 {
        let q = 64 * 64 - 1 - p;
        rot[q * 103..(q + 1) * 103].copy_from_slice(&cube[p * 103..(p + 1) * 103]);
    }
    let a = extract_patch_feature(&HyperspectralScene::new(64, 64, 1.0, axis.clone(), cube).unwrap(), &cfg).unwrap();
    let b = extract_patch_feature(&HyperspectralScene::new(64, 64, 1.0, axis, rot).unwrap(), &cfg).unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{x} vs {y}");
    }
}

/// Quantile by rank counting: smallest value with at least `k+1` elements
/// less than or equal to it is the k-th order statistic.
fn order_statistic(v: &[f64], k: usize) -> f64 {
    *v.iter().filter(|x| v.iter().filter(|y| *y <= *x).count() > k).min_by(|a, b| a.total_cmp(b)).unwrap()
}

fn oracle_quantile(v: &[f64], q: f64) -> f64 {
    let h = q * (v.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    order_statistic(v, lo) + (h - lo as f64) * (order_statistic(v, hi) - order_statistic(v, lo))
}

#[test]
fn statistics_match_rank_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v: Vec<f64> = (0..64 * 64).map(|_| rng.random_range(-2.0..5.0)).collect();
    let s = patch_statistics(&v);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let second = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    assert!((s[0] - mean).abs() < 1e-12);
    assert!((s[1] - (second - mean * mean).sqrt()).abs() < 1e-9);
    for (i, q) in [(2, 0.10), (3, 0.90), (4, 0.25), (5, 0.75), (6, 0.0), (7, 1.0)] {
        assert!((s[i] - oracle_quantile(&v, q)).abs() < 1e-12, "stat {i}");
    }
}

#[test]
fn descriptor_length_for_both_sensor_sizes() {
    let cfg = FeatureConfig::for_gsd(1.0).unwrap();
    for (bands, lo, hi) in [(103, 0.43, 0.86), (310, 0.40, 2.50)] {
        let axis = SpectralAxis::linear(lo, hi, bands).unwrap();
        let cube = (0..64 * 64 * bands).map(|i| ((i * 31) % 97) as f32 / 100.0).collect();
        let f = extract_patch_feature(&HyperspectralScene::new(64, 64, 1.0, axis, cube).unwrap(), &cfg).unwrap();
        assert_eq!(f.values().len(), 400);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn statistics_are_permutation_invariant(seed in 0u64..10_000, len in 1usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut w = v.clone();
        for i in (1..w.len()).rev() {
            w.swap(i, rng.random_range(0..=i));
        }
        let (a, b) = (patch_statistics(&v), patch_statistics(&w));
        for i in 0..8 {
            prop_assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_indices_stay_in_range(x in 0.0f64..10.0, y in 0.0f64..10.0) {
        for d in SpectralIndexDef::defaults() {
            let v = d.evaluate(x, y);
            prop_assert!(v.is_finite());
            if matches!(d.formula, hyperbench::features::IndexFormula::Normalized { .. }) {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn band_statistics_within_reflectance_range(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = SpectralAxis::linear(0.43, 0.86, 40).unwrap();
        let cube: Vec<f32> = (0..64 * 64 * 40).map(|_| rng.random_range(0.05..0.7)).collect();
        let (lo, hi) = cube.iter().fold((f32::MAX, f32::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        let patch = HyperspectralScene::new(64, 64, 1.0, axis, cube).unwrap();
        let f = extract_patch_feature(&patch, &FeatureConfig::for_gsd(1.0).unwrap()).unwrap();
        for m in 6..26 {
            let block = &f.values()[m * 8..m * 8 + 8];
            for i in [0, 2, 3, 4, 5, 6, 7] {
                prop_assert!(block[i] >= lo as f64 - 1e-9 && block[i] <= hi as f64 + 1e-9);
            }
            prop_assert!(block[1] >= 0.0 && block[1] <= (hi - lo) as f64 / 2.0 + 1e-9);
        }
        let ndvi = compute_spectral_index(&patch, &SpectralIndexDef::defaults()[0]).unwrap();
        prop_assert!(ndvi.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
