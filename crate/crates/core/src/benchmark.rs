//! Seeded synthetic spectral benchmark for representation-learning studies.
//!
//! Every material shares one smooth base reflectance and differs from it by
//! a few absorption features. Samples vary in brightness, continuum slope
//! and feature depth, and carry additive Gaussian noise that is stronger in
//! the atmospheric absorption windows. The labeled set is long-tailed; the
//! unlabeled set is drawn from the same materials without labels.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifiers::{knn_fit_predict, rf_fit, rf_predict, ClassifierError, Extractor, ForestConfig, LabeledSet, DEFAULT_K};
use crate::metrics::{macro_f1, overall_accuracy, ConfusionMatrix};
use crate::rng;
use crate::scene::Endmember;
use crate::split::SplitSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub n_materials: usize,
    pub bands: usize,
    pub wavelength_range: (f64, f64),
    pub labeled: usize,
    pub unlabeled: usize,
    /// Relative class frequencies of the labeled set (normalised).
    pub class_weights: Vec<f64>,
    /// Fraction of each class held out as the test set.
    pub test_fraction: f64,
    /// Absorption features per material.
    pub features_per_material: usize,
    /// Feature depth range.
    pub feature_depth: (f64, f64),
    /// Feature width range in µm.
    pub feature_width: (f64, f64),
    /// Multiplicative brightness factor in `[1 - j, 1 + j]`.
    pub brightness_jitter: f64,
    /// Standard deviation of the continuum slope per µm.
    pub slope_std: f64,
    /// Per-sample feature depth factor in `[1 - v, 1 + v]`.
    pub depth_jitter: f64,
    pub noise_std: f64,
    /// Wavelength windows (µm) of atmospheric absorption, where the noise
    /// standard deviation is `absorption_noise_std` instead.
    pub absorption_windows: Vec<(f64, f64)>,
    pub absorption_noise_std: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_materials: 5,
            bands: 60,
            wavelength_range: (0.4, 2.5),
            labeled: 1000,
            unlabeled: 10_000,
            class_weights: vec![0.5, 0.2, 0.15, 0.1, 0.05],
            test_fraction: 0.5,
            features_per_material: 3,
            feature_depth: (0.1, 0.3),
            feature_width: (0.15, 0.4),
            brightness_jitter: 0.05,
            slope_std: 0.0,
            depth_jitter: 0.1,
            noise_std: 0.03,
            absorption_windows: vec![(1.34, 1.46), (1.79, 1.96)],
            absorption_noise_std: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

pub type Result<T> = std::result::Result<T, BenchmarkError>;

/// Material shape: shared base times Gaussian dips `(center, width, depth)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub dips: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBenchmark {
    pub config: BenchmarkConfig,
    pub wavelengths: Vec<f64>,
    pub base: Endmember,
    pub materials: Vec<Material>,
    pub train: LabeledSet,
    pub test: LabeledSet,
    /// Row-major `unlabeled x bands`.
    pub unlabeled: Vec<f64>,
}

const MATERIAL_STREAM: u64 = 0x4d41_5452;
const LABELED_STREAM: u64 = 0x4c41_4245;
const UNLABELED_STREAM: u64 = 0x554e_4c42;

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchmarkError::Config(m.into()));
        if self.n_materials < 2 || self.bands < 2 {
            return bad("need at least 2 materials and 2 bands");
        }
        if self.class_weights.len() != self.n_materials || self.class_weights.iter().any(|w| !(*w > 0.0)) {
            return bad("class_weights must hold one positive weight per material");
        }
        if !(0.0..1.0).contains(&self.test_fraction) || self.test_fraction == 0.0 {
            return bad("test_fraction must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.brightness_jitter) || !(0.0..1.0).contains(&self.depth_jitter) {
            return bad("jitters must lie in [0, 1)");
        }
        if self.noise_std < 0.0 || self.slope_std < 0.0 || self.absorption_noise_std < 0.0 {
            return bad("noise and slope standard deviations must be non-negative");
        }
        Ok(())
    }

    /// Per-class labeled counts: largest-remainder rounding, each at least 2.
    pub fn class_counts(&self) -> Vec<usize> {
        let total: f64 = self.class_weights.iter().sum();
        let exact: Vec<f64> = self.class_weights.iter().map(|w| w / total * self.labeled as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let short = self.labeled.saturating_sub(counts.iter().sum());
        for &k in order.iter().cycle().take(short) {
            counts[k] += 1;
        }
        counts.iter().map(|&c| c.max(2)).collect()
    }
}

impl Material {
    fn random<R: Rng>(rng: &mut R, cfg: &BenchmarkConfig) -> Self {
        let (lo, hi) = cfg.wavelength_range;
        let margin = 0.05 * (hi - lo);
        let dips = (0..cfg.features_per_material)
            .map(|_| {
                (
                    rng.random_range(lo + margin..hi - margin),
                    rng.random_range(cfg.feature_width.0..=cfg.feature_width.1),
                    rng.random_range(cfg.feature_depth.0..=cfg.feature_depth.1),
                )
            })
            .collect();
        Self { dips }
    }

    fn dip(&self, w: f64, depth_scale: f64) -> f64 {
        self.dips.iter().map(|&(c, s, d)| depth_scale * d * (-(w - c).powi(2) / (2.0 * s * s)).exp()).sum()
    }
}

impl SpectralBenchmark {
    pub fn generate(config: &BenchmarkConfig) -> Result<Self> {
        config.validate()?;
        let (lo, hi) = config.wavelength_range;
        let wavelengths: Vec<f64> = (0..config.bands).map(|i| lo + (hi - lo) * i as f64 / (config.bands - 1) as f64).collect();
        let mut mr = rng::stream(config.seed, &[MATERIAL_STREAM]);
        let mut base = Endmember::random(&mut mr, lo, hi);
        base.baseline = base.baseline.max(0.25);
        let materials: Vec<Material> = (0..config.n_materials).map(|_| Material::random(&mut mr, config)).collect();
        let bench = Self { config: config.clone(), wavelengths, base, materials, train: empty_set(config)?, test: empty_set(config)?, unlabeled: Vec::new() };
        bench.fill()
    }

    fn fill(mut self) -> Result<Self> {
        let cfg = self.config.clone();
        let mut lr = rng::stream(cfg.seed, &[LABELED_STREAM]);
        let (mut tr, mut te) = ((Vec::new(), Vec::new()), (Vec::new(), Vec::new()));
        for (k, &count) in cfg.class_counts().iter().enumerate() {
            let n_test = ((count as f64 * cfg.test_fraction).round() as usize).clamp(1, count - 1);
            let mut rows: Vec<Vec<f64>> = (0..count).map(|_| self.sample(k, &mut lr)).collect();
            rows.shuffle(&mut lr);
            for (i, row) in rows.into_iter().enumerate() {
                let dst = if i < n_test { &mut te } else { &mut tr };
                dst.0.extend(row);
                dst.1.push(k as u32 + 1);
            }
        }
        let c = cfg.n_materials;
        self.train = LabeledSet::new(tr.0, cfg.bands, tr.1, c, SplitSet::Train)?;
        self.test = LabeledSet::new(te.0, cfg.bands, te.1, c, SplitSet::Test)?;
        let mut ur = rng::stream(cfg.seed, &[UNLABELED_STREAM]);
        self.unlabeled = (0..cfg.unlabeled).flat_map(|_| {
            let k = ur.random_range(0..c);
            self.sample(k, &mut ur)
        }).collect();
        Ok(self)
    }

    /// One noisy spectrum of material `k`.
    pub fn sample<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        let c = &self.config;
        let brightness = 1.0 + rng.random_range(-1.0..=1.0) * c.brightness_jitter;
        let slope = c.slope_std * Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
        let depth = 1.0 + rng.random_range(-1.0..=1.0) * c.depth_jitter;
        let mid = 0.5 * (c.wavelength_range.0 + c.wavelength_range.1);
        self.wavelengths
            .iter()
            .map(|&w| {
                let clean = (self.base.reflectance(w) + slope * (w - mid)) * (1.0 - self.materials[k].dip(w, depth));
                let std = if c.absorption_windows.iter().any(|&(a, b)| (a..=b).contains(&w)) { c.absorption_noise_std } else { c.noise_std };
                let n: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
                brightness * clean + std * n
            })
            .collect()
    }

    pub fn n_classes(&self) -> usize {
        self.config.n_materials
    }
}

fn empty_set(cfg: &BenchmarkConfig) -> Result<LabeledSet> {
    Ok(LabeledSet::new(Vec::new(), cfg.bands, Vec::new(), cfg.n_materials, SplitSet::Train)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub oa: f64,
    pub macro_f1: f64,
}

pub fn score(truth: &[u32], predicted: &[u32], n_classes: usize) -> Result<Scores> {
    let cm = ConfusionMatrix::from_labels(truth, predicted, n_classes)?;
    Ok(Scores { oa: overall_accuracy(&cm)?, macro_f1: macro_f1(&cm)? })
}

/// KNN and random-forest scores of `extractor` features on the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadScores {
    pub knn: Scores,
    pub rf: Scores,
}

pub fn evaluate_heads(bench: &SpectralBenchmark, extractor: &dyn Extractor, forest: &ForestConfig) -> Result<HeadScores> {
    let train = bench.train.map_features(extractor)?;
    let test = bench.test.map_features(extractor)?;
    let c = bench.n_classes();
    let knn = score(test.labels(), &knn_fit_predict(&train, test.features(), DEFAULT_K)?, c)?;
    let model = rf_fit(&train, forest)?;
    let rf = score(test.labels(), &rf_predict(&model, test.features())?, c)?;
    Ok(HeadScores { knn, rf })
}
