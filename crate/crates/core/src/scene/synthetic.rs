use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AnnotatedPolygon, GroundTruth, HyperspectralScene, Result, SceneError, SpectralAxis, LAND_USE_CLASSES};
use crate::rng;

/// Smooth reflectance shape: a baseline plus Gaussian absorption/reflection bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endmember {
    pub baseline: f64,
    /// `(center µm, width µm, amplitude)`
    pub bumps: Vec<(f64, f64, f64)>,
}

impl Endmember {
    /// 3 to 6 bumps with widths in [0.05, 0.4] µm centred inside `[lo, hi]`.
    pub fn random<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Self {
        let n = rng.random_range(3..=6);
        let baseline = rng.random_range(0.05..0.3);
        let bumps = (0..n)
            .map(|_| {
                let sign = if rng.random_bool(0.75) { 1.0 } else { -0.5 };
                (rng.random_range(lo..hi), rng.random_range(0.05..0.4), sign * rng.random_range(0.05..0.35))
            })
            .collect();
        Self { baseline, bumps }
    }

    pub fn reflectance(&self, wavelength: f64) -> f64 {
        let v = self.bumps.iter().fold(self.baseline, |acc, &(c, w, a)| {
            acc + a * (-(wavelength - c).powi(2) / (2.0 * w * w)).exp()
        });
        v.clamp(0.0, 1.0)
    }

    pub fn spectrum(&self, axis: &SpectralAxis) -> Vec<f64> {
        axis.wavelengths().iter().map(|&w| self.reflectance(w)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSceneConfig {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub n_materials: usize,
    pub n_polygons: usize,
    pub gsd: f64,
    pub wavelength_range: (f64, f64),
    /// Per-pixel multiplicative brightness factor drawn from `[1 - j, 1 + j]`.
    pub brightness_jitter: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise_std: f64,
    pub min_side: usize,
    pub max_side: usize,
    pub max_retries: usize,
}

impl Default for SyntheticSceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            bands: 310,
            n_materials: 5,
            n_polygons: 12,
            gsd: 1.0,
            wavelength_range: (0.4, 2.5),
            brightness_jitter: 0.15,
            noise_std: 0.01,
            min_side: 3,
            max_side: 12,
            max_retries: 10_000,
        }
    }
}

/// Upper bound on synthetic materials (the size of the urban nomenclature).
pub const MAX_MATERIALS: usize = 32;

pub fn generate_synthetic_scene(
    seed: u64,
    height: usize,
    width: usize,
    bands: usize,
    n_materials: usize,
    n_polygons: usize,
) -> Result<(HyperspectralScene, GroundTruth)> {
    let cfg = SyntheticSceneConfig { height, width, bands, n_materials, n_polygons, ..Default::default() };
    cfg.generate(seed)
}

impl SyntheticSceneConfig {
    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(SceneError::Generation(m.into()));
        if self.height == 0 || self.width == 0 || self.bands == 0 || self.n_polygons == 0 {
            return bad("dimensions and polygon count must be positive");
        }
        if self.n_materials == 0 || self.n_materials > MAX_MATERIALS {
            return bad("material count must be in 1..=32");
        }
        if self.min_side == 0 || self.min_side > self.max_side {
            return bad("polygon side bounds must satisfy 0 < min_side <= max_side");
        }
        if !(self.noise_std >= 0.0) || !(0.0..1.0).contains(&self.brightness_jitter) {
            return bad("noise must be >= 0 and jitter in [0, 1)");
        }
        Ok(())
    }

    pub fn axis(&self) -> Result<SpectralAxis> {
        SpectralAxis::linear(self.wavelength_range.0, self.wavelength_range.1, self.bands)
    }

    pub fn endmembers(&self, seed: u64) -> Vec<Endmember> {
        let mut r = rng::stream(seed, &[0x656e_646d]);
        (0..self.n_materials + 1)
            .map(|_| Endmember::random(&mut r, self.wavelength_range.0, self.wavelength_range.1))
            .collect()
    }

    pub fn generate(&self, seed: u64) -> Result<(HyperspectralScene, GroundTruth)> {
        self.check()?;
        let axis = self.axis()?;
        let endmembers = self.endmembers(seed);
        let spectra: Vec<Vec<f64>> = endmembers.iter().map(|e| e.spectrum(&axis)).collect();
        let gt = self.place_polygons(seed)?;
        let owner = super::polygon_index_map(self.height, self.width, &gt)?;

        let mut r = rng::stream(seed, &[0x7069_7865]);
        let noise = Normal::new(0.0, self.noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
        let b = self.bands;
        let mut cube = vec![0f32; self.height * self.width * b];
        for (pix, who) in owner.iter().enumerate() {
            // Background uses the extra endmember at index n_materials.
            let material = who.map_or(self.n_materials, |i| gt.polygons[i].class_id as usize - 1);
            let gain = 1.0 + self.brightness_jitter * (2.0 * r.random::<f64>() - 1.0);
            for (band, &s) in spectra[material].iter().enumerate() {
                let eps = if self.noise_std > 0.0 { noise.sample(&mut r) } else { 0.0 };
                cube[pix * b + band] = (gain * s + eps).max(0.0) as f32;
            }
        }
        let scene = HyperspectralScene::new(self.height, self.width, self.gsd, axis, cube)?;
        Ok((scene, gt))
    }

    /// Non-overlapping rectangles, some with cut corners (octagons), separated by
    /// at least one pixel. Polygon `i` carries material `i mod n_materials + 1`.
    fn place_polygons(&self, seed: u64) -> Result<GroundTruth> {
        let mut r = rng::stream(seed, &[0x706f_6c79]);
        let max_side = self.max_side.min(self.height).min(self.width);
        if self.min_side > max_side {
            return Err(SceneError::Generation(format!(
                "polygons of side >= {} do not fit a {}x{} scene",
                self.min_side, self.height, self.width
            )));
        }
        let mut boxes: Vec<(usize, usize, usize, usize)> = Vec::new();
        let mut polygons = Vec::with_capacity(self.n_polygons);
        let mut tries = 0;
        while polygons.len() < self.n_polygons {
            tries += 1;
            if tries > self.max_retries {
                return Err(SceneError::Generation(format!(
                    "placed {} of {} polygons after {} attempts",
                    polygons.len(),
                    self.n_polygons,
                    self.max_retries
                )));
            }
            let w = r.random_range(self.min_side..=max_side);
            let h = r.random_range(self.min_side..=max_side);
            let x = r.random_range(0..=self.width - w);
            let y = r.random_range(0..=self.height - h);
            // Keep a one-pixel gutter between rectangles.
            let clash = boxes.iter().any(|&(bx, by, bw, bh)| x < bx + bw + 1 && bx < x + w + 1 && y < by + bh + 1 && by < y + h + 1);
            if clash {
                continue;
            }
            boxes.push((x, y, w, h));
            let (x0, y0, x1, y1) = (x as f64, y as f64, (x + w) as f64, (y + h) as f64);
            let vertices = if w >= 4 && h >= 4 && r.random_bool(0.3) {
                let c = (w.min(h) / 4) as f64;
                vec![
                    [x0 + c, y0],
                    [x1 - c, y0],
                    [x1, y0 + c],
                    [x1, y1 - c],
                    [x1 - c, y1],
                    [x0 + c, y1],
                    [x0, y1 - c],
                    [x0, y0 + c],
                ]
            } else {
                vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
            };
            let i = polygons.len();
            polygons.push(AnnotatedPolygon {
                vertices,
                class_id: (i % self.n_materials) as u32 + 1,
                land_use_id: r.random_range(1..=LAND_USE_CLASSES.len() as u32),
                group_id: None,
            });
        }
        Ok(GroundTruth { polygons })
    }
}
