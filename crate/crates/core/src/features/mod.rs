//! Hand-crafted 400-dimensional patch descriptor: 6 spectral indices, 20
//! uniformly sampled bands and 24 Gabor magnitudes, each summarised by 8
//! statistics.

mod gabor;
mod indices;
mod stats;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gabor::{band_average, reflect, GaborBank, GaborFilter, NOMINAL_FREQUENCIES, ORIENTATIONS};
pub use indices::{compute_spectral_index, nearest_band, sample_uniform_bands, uniform_band_indices, IndexFormula, SpectralIndexDef};
pub use stats::{patch_statistics, quantile_sorted, STAT_NAMES};

use crate::scene::HyperspectralScene;

pub const FEATURE_DIM: usize = 400;
pub const PATCH_SIZE: usize = 64;
pub const SAMPLED_BANDS: usize = 20;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("wavelength {wavelength} um outside the axis domain [{lo}, {hi}]")]
    Domain { wavelength: f64, lo: f64, hi: f64 },
    #[error("size error: {0}")]
    Size(String),
    #[error("invalid feature config: {0}")]
    Config(String),
    #[error("feature export to {path}: {reason}")]
    Export { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub patch_size: usize,
    pub indices: Vec<SpectralIndexDef>,
    pub sampled_bands: usize,
    pub gabor: GaborBank,
}

impl FeatureConfig {
    /// Default descriptor for a sensor with the given ground sampling distance.
    pub fn for_gsd(gsd: f64) -> Result<Self> {
        Self::new(PATCH_SIZE, SpectralIndexDef::defaults(), SAMPLED_BANDS, GaborBank::for_gsd(gsd)?)
    }

    /// Rejects any layout that does not produce exactly 400 values.
    pub fn new(patch_size: usize, indices: Vec<SpectralIndexDef>, sampled_bands: usize, gabor: GaborBank) -> Result<Self> {
        let dim = (indices.len() + sampled_bands + gabor.len()) * STAT_NAMES.len();
        if dim != FEATURE_DIM {
            return Err(FeatureError::Config(format!("layout yields {dim} values, expected {FEATURE_DIM}")));
        }
        if patch_size == 0 {
            return Err(FeatureError::Config("patch size must be positive".into()));
        }
        Ok(Self { patch_size, indices, sampled_bands, gabor })
    }

    /// Map names in descriptor order.
    pub fn map_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.indices.iter().map(|d| d.name.clone()).collect();
        names.extend((0..self.sampled_bands).map(|i| format!("band{i:02}")));
        for f in 0..self.gabor.frequencies.len() {
            names.extend((0..self.gabor.orientations.len()).map(|o| format!("gabor_f{f}_o{o}")));
        }
        names
    }

    /// Column names `{map}_{stat}`.
    pub fn feature_names(&self) -> Vec<String> {
        self.map_names().iter().flat_map(|m| STAT_NAMES.iter().map(move |s| format!("{m}_{s}"))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchFeature(Vec<f64>);

impl PatchFeature {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_DIM {
            return Err(FeatureError::Size(format!("{} feature values, expected {FEATURE_DIM}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::Config("non-finite feature value".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Same-size Gabor magnitude maps of the band-averaged patch, frequency-major.
pub fn gabor_responses(patch: &HyperspectralScene, bank: &GaborBank) -> Vec<Vec<f64>> {
    let img = band_average(patch.cube(), patch.bands());
    bank.filters().iter().map(|f| f.magnitude(&img, patch.height(), patch.width())).collect()
}

pub fn extract_patch_feature(patch: &HyperspectralScene, config: &FeatureConfig) -> Result<PatchFeature> {
    if patch.height() != config.patch_size || patch.width() != config.patch_size {
        return Err(FeatureError::Size(format!(
            "patch is {}x{}, expected {}x{}",
            patch.height(),
            patch.width(),
            config.patch_size,
            config.patch_size
        )));
    }
    let mut maps = Vec::with_capacity(FEATURE_DIM / STAT_NAMES.len());
    for def in &config.indices {
        maps.push(compute_spectral_index(patch, def)?);
    }
    maps.extend(sample_uniform_bands(patch, config.sampled_bands)?);
    maps.extend(gabor_responses(patch, &config.gabor));
    PatchFeature::new(maps.iter().flat_map(|m| patch_statistics(m)).collect())
}

/// Top-left corners of the non-overlapping patches tiling the scene.
pub fn patch_grid(height: usize, width: usize, size: usize) -> Vec<(usize, usize)> {
    if size == 0 {
        return Vec::new();
    }
    (0..height / size).flat_map(|r| (0..width / size).map(move |c| (r * size, c * size))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    /// `(patch id, descriptor)`, in grid order.
    pub rows: Vec<(String, PatchFeature)>,
}

/// Descriptors of every full patch in the scene; patches are processed in
/// parallel and collected in grid order.
pub fn extract_scene_features(scene: &HyperspectralScene, config: &FeatureConfig) -> Result<FeatureTable> {
    let grid = patch_grid(scene.height(), scene.width(), config.patch_size);
    let rows = grid
        .par_iter()
        .map(|&(r, c)| {
            let p = scene.patch(r, c, config.patch_size).map_err(|e| FeatureError::Size(e.to_string()))?;
            Ok((format!("r{r}_c{c}"), extract_patch_feature(&p, config)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureTable { names: config.feature_names(), rows })
}

impl FeatureTable {
    /// CSV with a `patch_id` column followed by the named features. Floats are
    /// written in shortest round-trip form.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| FeatureError::Export { path: path.display().to_string(), reason: e.to_string() };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let mut header = vec!["patch_id".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (id, f) in &self.rows {
            let mut rec = vec![id.clone()];
            rec.extend(f.values().iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| FeatureError::Export { path: path.display().to_string(), reason: e.to_string() })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let fail = |reason: String| FeatureError::Export { path: path.display().to_string(), reason };
        let mut r = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
        let header = r.headers().map_err(|e| fail(e.to_string()))?.clone();
        if header.get(0) != Some("patch_id") {
            return Err(fail("first column must be patch_id".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| fail(e.to_string()))?;
            let values = rec.iter().skip(1).map(|v| v.parse::<f64>().map_err(|e| fail(e.to_string()))).collect::<Result<Vec<_>>>()?;
            rows.push((rec[0].to_string(), PatchFeature::new(values)?));
        }
        Ok(Self { names, rows })
    }
}
