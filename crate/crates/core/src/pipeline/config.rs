use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{PipelineError, Result};
use crate::classifiers::{ForestConfig, DEFAULT_K};
use crate::mae::{AeConfig, MaeConfig};
use crate::scene::SyntheticSceneConfig;
use crate::split::Proportions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    /// Exact below the branch-and-bound cap, heuristic above it.
    Auto,
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSettings {
    pub proportions: Proportions,
    /// Polygons closer than this many meters share a group.
    pub radius_m: f64,
    /// Number of diverse splits.
    pub k: usize,
    pub min_hamming: usize,
    pub solver: SolverChoice,
    pub heuristic_budget: usize,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self { proportions: Proportions::default(), radius_m: 50.0, k: 1, min_hamming: 2, solver: SolverChoice::Auto, heuristic_budget: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSettings {
    pub knn_k: usize,
    pub forest: ForestConfig,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self { knn_k: DEFAULT_K, forest: ForestConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub out: PathBuf,
    /// Base seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Scene stem (`.json` header + `.bin` cube). Defaults to the generated scene.
    pub scene: Option<PathBuf>,
    /// Ground-truth JSON. Defaults to the generated ground truth.
    pub ground_truth: Option<PathBuf>,
    pub generate: SyntheticSceneConfig,
    pub split: SplitSettings,
    pub mae: MaeConfig,
    pub ae: AeConfig,
    /// Cap on scene pixels used for pretraining, sampled without replacement.
    pub pretrain_pixels: Option<usize>,
    pub classifier: ClassifierSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("run"),
            seed: 0,
            scene: None,
            ground_truth: None,
            generate: SyntheticSceneConfig { n_polygons: 30, max_side: 9, ..SyntheticSceneConfig::default() },
            split: SplitSettings { radius_m: 1.0, k: 4, ..SplitSettings::default() },
            mae: MaeConfig::default(),
            ae: AeConfig::default(),
            pretrain_pixels: None,
            classifier: ClassifierSettings::default(),
        }
    }
}

fn merge(base: &mut Value, overrides: Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl PipelineConfig {
    /// Reads a JSON config; fields it omits, at any depth, keep their defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let fail = |e: &dyn std::fmt::Display| PipelineError::Config(vec![format!("config {}: {e}", path.display())]);
        let text = fs::read_to_string(path).map_err(|e| fail(&e))?;
        let overrides: Value = serde_json::from_str(&text).map_err(|e| fail(&e))?;
        let mut merged = serde_json::to_value(Self::default()).expect("config serializes");
        merge(&mut merged, overrides);
        serde_json::from_value(merged).map_err(|e| fail(&e))
    }

    /// Copies the base seed into every stage config.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.mae.seed = seed;
        self.ae.seed = seed;
        self.classifier.forest.seed = seed;
        self
    }

    /// Every violated field, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let p = self.split.proportions;
        for (name, v) in [("split.proportions.train", p.train), ("split.proportions.validation", p.validation), ("split.proportions.test", p.test)] {
            if !(0.0..1.0).contains(&v) {
                errors.push(format!("{name} = {v} must lie in [0, 1)"));
            }
        }
        if p.as_array().iter().sum::<f64>() >= 1.0 {
            errors.push("split.proportions must sum to less than 1".into());
        }
        if !(self.split.radius_m > 0.0) {
            errors.push(format!("split.radius_m = {} must be positive", self.split.radius_m));
        }
        if self.split.k == 0 {
            errors.push("split.k must be at least 1".into());
        }
        if self.split.heuristic_budget == 0 {
            errors.push("split.heuristic_budget must be positive".into());
        }
        if self.classifier.knn_k == 0 {
            errors.push("classifier.knn_k must be at least 1".into());
        }
        if self.classifier.forest.n_trees == 0 {
            errors.push("classifier.forest.n_trees must be at least 1".into());
        }
        if self.pretrain_pixels == Some(0) {
            errors.push("pretrain_pixels must be positive when set".into());
        }
        let bands = self.generate.bands;
        if self.scene.is_none() {
            if let Err(e) = self.mae.validate(bands) {
                errors.push(format!("mae: {e}"));
            }
        }
        if self.ae.latent_dim == 0 {
            errors.push("ae.latent_dim must be positive".into());
        }
        for (name, path) in [("scene", self.scene.as_ref().map(|s| s.with_extension("json"))), ("ground_truth", self.ground_truth.clone())] {
            if let Some(path) = path {
                if !path.exists() {
                    errors.push(format!("{name}: {} does not exist", path.display()));
                }
            }
        }
        if self.scene.is_some() != self.ground_truth.is_some() {
            errors.push("scene and ground_truth must be given together".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(errors))
        }
    }
}
