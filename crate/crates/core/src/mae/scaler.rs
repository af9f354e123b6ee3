use serde::{Deserialize, Serialize};

/// Per-band affine standardization `(x - mean) / scale`, fitted on the
/// pretraining spectra and stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl BandScaler {
    pub fn identity(bands: usize) -> Self {
        Self { mean: vec![0.0; bands], scale: vec![1.0; bands] }
    }

    /// Population mean and std of each band. Constant bands get scale 1.
    pub fn fit(spectra: &[f64], bands: usize) -> Self {
        let n = (spectra.len() / bands).max(1) as f64;
        let mut mean = vec![0.0; bands];
        for s in spectra.chunks(bands) {
            mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; bands];
        for s in spectra.chunks(bands) {
            for ((v, x), m) in var.iter_mut().zip(s).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var.into_iter().map(|v| (v / n).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    pub fn is_identity(&self) -> bool {
        self.mean.iter().all(|m| *m == 0.0) && self.scale.iter().all(|s| *s == 1.0)
    }

    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        spectrum.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }

    pub fn apply_all(&self, spectra: &[f64]) -> Vec<f64> {
        spectra.chunks(self.bands()).flat_map(|s| self.apply(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_bands_have_zero_mean_unit_std() {
        let x = [1.0, 5.0, 3.0, 5.0, 2.0, 5.0];
        let s = BandScaler::fit(&x, 2);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale[1], 1.0);
        let z = s.apply_all(&x);
        let col: Vec<f64> = z.iter().step_by(2).copied().collect();
        assert!(col.iter().sum::<f64>().abs() < 1e-12);
        assert!((col.iter().map(|v| v * v).sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
        assert!(BandScaler::identity(3).is_identity());
    }
}
