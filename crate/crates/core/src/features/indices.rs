//! Spectral indices evaluated on the nearest bands of any sensor axis.

use serde::{Deserialize, Serialize};

use super::{FeatureError, Result};
use crate::scene::{HyperspectralScene, SpectralAxis};

pub const NIR: f64 = 0.86;
pub const RED: f64 = 0.66;
pub const RED_EDGE: f64 = 0.71;
pub const GREEN: f64 = 0.56;
pub const BLUE: f64 = 0.48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IndexFormula {
    /// `(a - b) / (a + b)`, clamped to [-1, 1].
    Normalized { a: f64, b: f64 },
    /// `num / den - 1`.
    RatioMinusOne { num: f64, den: f64 },
    /// `(1 + l) (nir - red) / (nir + red + l)`.
    SoilAdjusted { nir: f64, red: f64, l: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralIndexDef {
    pub name: String,
    pub formula: IndexFormula,
}

impl SpectralIndexDef {
    fn new(name: &str, formula: IndexFormula) -> Self {
        Self { name: name.into(), formula }
    }

    /// NDVI, ANVI, CI, NDVI_RE, VgNIR_BI and SAVI.
    pub fn defaults() -> Vec<Self> {
        use IndexFormula::*;
        vec![
            Self::new("ndvi", Normalized { a: NIR, b: RED }),
            Self::new("anvi", Normalized { a: NIR, b: BLUE }),
            Self::new("ci", RatioMinusOne { num: NIR, den: RED }),
            Self::new("ndvi_re", Normalized { a: NIR, b: RED_EDGE }),
            Self::new("vgnir_bi", Normalized { a: GREEN, b: NIR }),
            Self::new("savi", SoilAdjusted { nir: NIR, red: RED, l: 0.5 }),
        ]
    }

    pub fn wavelengths(&self) -> [f64; 2] {
        match self.formula {
            IndexFormula::Normalized { a, b } => [a, b],
            IndexFormula::RatioMinusOne { num, den } => [num, den],
            IndexFormula::SoilAdjusted { nir, red, .. } => [nir, red],
        }
    }

    /// Formula applied to the reflectances at the two wavelengths, in order.
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        match self.formula {
            IndexFormula::Normalized { .. } => {
                let s = x + y;
                if s == 0.0 {
                    0.0
                } else {
                    ((x - y) / s).clamp(-1.0, 1.0)
                }
            }
            IndexFormula::RatioMinusOne { .. } => {
                if y == 0.0 {
                    0.0
                } else {
                    x / y - 1.0
                }
            }
            IndexFormula::SoilAdjusted { l, .. } => {
                let s = x + y + l;
                if s == 0.0 {
                    0.0
                } else {
                    (1.0 + l) * (x - y) / s
                }
            }
        }
    }
}

/// Index of the band center closest to `wavelength`, ties to the lower index.
/// The domain extends half a band spacing past each end of the axis.
pub fn nearest_band(axis: &SpectralAxis, wavelength: f64) -> Result<usize> {
    let w = axis.wavelengths();
    let (lo, hi) = if w.len() == 1 {
        (w[0], w[0])
    } else {
        (w[0] - (w[1] - w[0]) / 2.0, w[w.len() - 1] + (w[w.len() - 1] - w[w.len() - 2]) / 2.0)
    };
    if !(wavelength >= lo - 1e-12 && wavelength <= hi + 1e-12) {
        return Err(FeatureError::Domain { wavelength, lo, hi });
    }
    let mut best = 0;
    for (i, c) in w.iter().enumerate() {
        if (c - wavelength).abs() < (w[best] - wavelength).abs() - 1e-12 {
            best = i;
        }
    }
    Ok(best)
}

/// Per-pixel index map in row-major order.
pub fn compute_spectral_index(patch: &HyperspectralScene, def: &SpectralIndexDef) -> Result<Vec<f64>> {
    let [wa, wb] = def.wavelengths();
    let a = nearest_band(patch.axis(), wa)?;
    let b = nearest_band(patch.axis(), wb)?;
    let bands = patch.bands();
    Ok(patch.cube().chunks_exact(bands).map(|s| def.evaluate(s[a] as f64, s[b] as f64)).collect())
}

/// `count` band indices evenly spaced over `0..bands`, endpoints included.
pub fn uniform_band_indices(bands: usize, count: usize) -> Result<Vec<usize>> {
    if bands < count || count < 2 {
        return Err(FeatureError::Size(format!("cannot sample {count} bands from {bands}")));
    }
    Ok((0..count).map(|i| (i as f64 * (bands - 1) as f64 / (count - 1) as f64).round() as usize).collect())
}

/// One map per uniformly sampled band.
pub fn sample_uniform_bands(patch: &HyperspectralScene, count: usize) -> Result<Vec<Vec<f64>>> {
    let idx = uniform_band_indices(patch.bands(), count)?;
    let bands = patch.bands();
    Ok(idx.iter().map(|&b| patch.cube().chunks_exact(bands).map(|s| s[b] as f64).collect()).collect())
}
