//! Helpers shared by integration test targets.
#![allow(dead_code)]

use std::f64::consts::PI;

use hyperbench::mae::MaeConfig;
use hyperbench::rng;
use hyperbench::scene::{GroupClassMatrix, HyperspectralScene, SpectralAxis};
use hyperbench::split::{Proportions, SplitProblem, SplitSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Optimal objective by enumerating all 4^n assignments, plus the
/// lexicographically smallest optimal assignment. Coverage is checked as
/// `count >= p * total` in floating point, independently of the solver's
/// integer thresholds.
pub fn brute_force_split(counts: &[Vec<u64>], p: Proportions) -> Option<(u64, Vec<SplitSet>)> {
    let n = counts.len();
    let c = counts[0].len();
    let totals: Vec<f64> = (0..c).map(|k| counts.iter().map(|r| r[k] as f64).sum()).collect();
    let ps = [p.train, p.validation, p.test];
    let mut best: Option<(u64, Vec<SplitSet>)> = None;
    let mut sets = vec![SplitSet::Train; n];
    let mut code = vec![0usize; n];
    loop {
        for i in 0..n {
            sets[i] = SplitSet::ALL[code[i]];
        }
        let mut have = vec![[0.0f64; 3]; c];
        let mut cost = 0u64;
        for i in 0..n {
            let j = match sets[i] {
                SplitSet::Train => 0,
                SplitSet::Validation => 1,
                SplitSet::Test => 2,
                SplitSet::Pool => continue,
            };
            for k in 0..c {
                have[k][j] += counts[i][k] as f64;
                cost += counts[i][k];
            }
        }
        let ok = (0..c).all(|k| (0..3).all(|j| have[k][j] >= ps[j] * totals[k] - 1e-9 * totals[k]));
        if ok && best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, sets.clone()));
        }
        // Odometer with the last group varying fastest, in set-id order, so
        // strict improvement keeps the lexicographically smallest optimum.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            code[i] += 1;
            if code[i] < 4 {
                break;
            }
            code[i] = 0;
        }
    }
}

/// Random instance with `n` groups and `c` classes; every row and class is nonzero.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, c: usize) -> (Vec<Vec<u64>>, Proportions) {
    loop {
        let rows: Vec<Vec<u64>> = (0..n)
            .map(|_| (0..c).map(|_| if rng.random_bool(0.3) { 0 } else { rng.random_range(1..30) }).collect())
            .collect();
        if rows.iter().any(|r| r.iter().all(|v| *v == 0)) || (0..c).any(|k| rows.iter().all(|r| r[k] == 0)) {
            continue;
        }
        let p = Proportions { train: rng.random_range(0.05..0.25), validation: rng.random_range(0.05..0.25), test: rng.random_range(0.05..0.4) };
        return (rows, p);
    }
}

pub fn problem(rows: &[Vec<u64>], p: Proportions) -> SplitProblem {
    SplitProblem::new(GroupClassMatrix::from_rows(rows).unwrap(), p).unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn scene_from_image(img: &[f64], n: usize) -> HyperspectralScene {
    let axis = SpectralAxis::new(vec![0.55]).unwrap();
    HyperspectralScene::new(n, n, 1.0, axis, img.iter().map(|v| *v as f32).collect()).unwrap()
}

/// Mirror-extends the image by `r` on every side, built by explicit
/// concatenation of flipped strips.
pub fn mirror_pad(img: &[f64], n: usize, r: usize) -> (Vec<f64>, usize) {
    let line = |v: &[f64]| -> Vec<f64> {
        let mut out = Vec::new();
        let mut left: Vec<f64> = Vec::new();
        while left.len() < r {
            let mut rev = v.to_vec();
            if (left.len() / n) % 2 == 0 {
                rev.reverse();
            }
            left.extend(rev.iter().rev().take(r - left.len()).rev().copied().collect::<Vec<_>>().iter().rev());
        }
        left.reverse();
        out.extend(left);
        out.extend_from_slice(v);
        let mut right: Vec<f64> = Vec::new();
        let mut k = 0;
        while right.len() < r {
            let mut seg = v.to_vec();
            if k % 2 == 0 {
                seg.reverse();
            }
            right.extend(seg.into_iter().take(r - right.len()));
            k += 1;
        }
        out.extend(right);
        out
    };
    let m = n + 2 * r;
    let rows: Vec<Vec<f64>> = (0..n).map(|y| line(&img[y * n..(y + 1) * n])).collect();
    let mut out = vec![0.0; m * m];
    for x in 0..m {
        let col: Vec<f64> = rows.iter().map(|row| row[x]).collect();
        for (y, v) in line(&col).into_iter().enumerate() {
            out[y * m + x] = v;
        }
    }
    (out, m)
}

/// Direct 2-D complex convolution magnitude.
pub fn direct_gabor(img: &[f64], n: usize, f: f64, theta: f64, sigma: f64, r: usize) -> Vec<f64> {
    let (pad, m) = mirror_pad(img, n, r);
    let ri = r as isize;
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for v in -ri..=ri {
                for u in -ri..=ri {
                    let (uf, vf) = (u as f64, v as f64);
                    let env = (-(uf * uf + vf * vf) / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma);
                    let ph = 2.0 * PI * f * (uf * theta.cos() + vf * theta.sin());
                    let px = pad[((y as isize + ri - v) as usize) * m + (x as isize + ri - u) as usize];
                    re += env * ph.cos() * px;
                    im += env * ph.sin() * px;
                }
            }
            out[y * n + x] = re.hypot(im);
        }
    }
    out
}

pub fn oracle_oa(t: &[u32], p: &[u32]) -> f64 {
    t.iter().zip(p).filter(|(a, b)| a == b).count() as f64 / t.len() as f64
}

pub fn oracle_macro_f1(t: &[u32], p: &[u32], c: usize) -> f64 {
    let mut f1s = Vec::new();
    for k in 1..=c as u32 {
        let tp = t.iter().zip(p).filter(|(a, b)| **a == k && **b == k).count() as f64;
        let fp = t.iter().zip(p).filter(|(a, b)| **a != k && **b == k).count() as f64;
        let fn_ = t.iter().zip(p).filter(|(a, b)| **a == k && **b != k).count() as f64;
        if tp + fn_ == 0.0 {
            continue;
        }
        // 2PR/(P+R) simplifies to 2TP/(2TP+FP+FN).
        f1s.push(2.0 * tp / (2.0 * tp + fp + fn_));
    }
    f1s.iter().sum::<f64>() / f1s.len() as f64
}

pub fn tiny(mask_ratio: f64) -> MaeConfig {
    MaeConfig { token_len: 4, embed_dim: 8, n_heads: 2, depth: 2, decoder_depth: 1, decoder_dim: 8, decoder_heads: 2, mask_ratio, ..Default::default() }
}

pub fn smooth_spectra(n: usize, b: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[]);
    let mut out = Vec::with_capacity(n * b);
    for _ in 0..n {
        let a: f64 = r.random_range(0.1..0.6);
        let s: f64 = r.random_range(-0.3..0.3);
        let w: f64 = r.random_range(2.0..6.0);
        out.extend((0..b).map(|i| {
            let x = i as f64 / b as f64;
            a + s * x + 0.05 * (w * x).sin()
        }));
    }
    out
}
