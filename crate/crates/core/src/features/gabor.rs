//! Complex Gabor filter bank applied to the band-averaged image.
//!
//! Each filter is an isotropic Gaussian times a complex plane wave, which
//! factors into a row kernel and a column kernel; filtering is two 1-D
//! complex passes over a half-sample symmetric extension of the image.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{FeatureError, Result};

/// Frequencies for a fine enough GSD, in cycles per metre.
pub const NOMINAL_FREQUENCIES: [f64; 4] = [1.0, 2.154_434_690_031_884, 4.641_588_833_612_779, 10.0];
pub const ORIENTATIONS: usize = 6;
/// Envelope scale times frequency (about one octave of bandwidth).
pub const SIGMA_FREQUENCY_PRODUCT: f64 = 0.56;
/// Highest allowed frequency as a fraction of the Nyquist frequency.
pub const NYQUIST_MARGIN: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborBank {
    /// Cycles per metre.
    pub frequencies: Vec<f64>,
    /// Radians.
    pub orientations: Vec<f64>,
    pub gsd: f64,
}

impl GaborBank {
    /// Four log-spaced frequencies over a decade and six orientations
    /// `k pi / 6`. The decade is [1, 10] m^-1 when that fits under the
    /// Nyquist margin; otherwise it is shifted down so its top sits at
    /// `NYQUIST_MARGIN` times Nyquist.
    pub fn for_gsd(gsd: f64) -> Result<Self> {
        if !(gsd > 0.0 && gsd.is_finite()) {
            return Err(FeatureError::Config(format!("gsd {gsd} must be positive")));
        }
        let top = (NYQUIST_MARGIN * 0.5 / gsd).min(NOMINAL_FREQUENCIES[3]);
        let scale = top / NOMINAL_FREQUENCIES[3];
        let frequencies = NOMINAL_FREQUENCIES.iter().map(|f| f * scale).collect();
        let orientations = (0..ORIENTATIONS).map(|k| k as f64 * PI / ORIENTATIONS as f64).collect();
        Self::new(frequencies, orientations, gsd)
    }

    pub fn new(frequencies: Vec<f64>, orientations: Vec<f64>, gsd: f64) -> Result<Self> {
        let nyquist = 0.5 / gsd;
        if let Some(f) = frequencies.iter().find(|f| !(**f > 0.0 && **f < nyquist)) {
            return Err(FeatureError::Config(format!("frequency {f} m^-1 outside (0, {nyquist}) for gsd {gsd} m")));
        }
        Ok(Self { frequencies, orientations, gsd })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len() * self.orientations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Filters in frequency-major order.
    pub fn filters(&self) -> Vec<GaborFilter> {
        self.frequencies
            .iter()
            .flat_map(|&f| self.orientations.iter().map(move |&t| (f, t)))
            .map(|(f, theta)| GaborFilter::new(f * self.gsd, theta))
            .collect()
    }
}

/// One filter in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborFilter {
    /// Cycles per pixel.
    pub frequency: f64,
    pub theta: f64,
    /// Envelope standard deviation in pixels.
    pub sigma: f64,
    pub radius: usize,
}

impl GaborFilter {
    pub fn new(frequency: f64, theta: f64) -> Self {
        let sigma = SIGMA_FREQUENCY_PRODUCT / frequency;
        Self { frequency, theta, sigma, radius: (3.0 * sigma).ceil() as usize }
    }

    /// `exp(-(x^2+y^2) / 2 sigma^2) / (2 pi sigma^2) * exp(i 2 pi f (x cos t + y sin t))`,
    /// with `x` along columns and `y` along rows.
    pub fn kernel_value(&self, x: f64, y: f64) -> Complex64 {
        let s2 = self.sigma * self.sigma;
        let env = (-(x * x + y * y) / (2.0 * s2)).exp() / (2.0 * PI * s2);
        Complex64::from_polar(env, 2.0 * PI * self.frequency * (x * self.theta.cos() + y * self.theta.sin()))
    }

    /// 1-D factor along one axis, `direction` being cos(t) for columns and sin(t) for rows.
    fn factor(&self, direction: f64) -> Vec<Complex64> {
        let r = self.radius as isize;
        let norm = 1.0 / ((2.0 * PI).sqrt() * self.sigma);
        (-r..=r)
            .map(|u| {
                let u = u as f64;
                Complex64::from_polar(norm * (-u * u / (2.0 * self.sigma * self.sigma)).exp(), 2.0 * PI * self.frequency * direction * u)
            })
            .collect()
    }

    /// Sum of kernel taps, the response to a constant image.
    pub fn dc_gain(&self) -> Complex64 {
        let cx: Complex64 = self.factor(self.theta.cos()).iter().sum();
        let cy: Complex64 = self.factor(self.theta.sin()).iter().sum();
        cx * cy
    }

    /// Magnitude of the same-size filtered image (row-major `h x w`).
    pub fn magnitude(&self, image: &[f64], h: usize, w: usize) -> Vec<f64> {
        let fx = self.factor(self.theta.cos());
        let fy = self.factor(self.theta.sin());
        let r = self.radius as isize;
        // Correlation with the flipped kernel equals convolution; kernels are
        // indexed by offset so out(p) = sum_u k(u) in(p - u).
        let mut rows = vec![Complex64::new(0.0, 0.0); h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for (t, k) in fx.iter().enumerate() {
                    let xi = reflect(x as isize - (t as isize - r), w);
                    acc += k * image[y * w + xi];
                }
                rows[y * w + x] = acc;
            }
        }
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for (t, k) in fy.iter().enumerate() {
                    let yi = reflect(y as isize - (t as isize - r), h);
                    acc += k * rows[yi * w + x];
                }
                out[y * w + x] = acc.norm();
            }
        }
        out
    }
}

/// Half-sample symmetric extension: `... b a | a b c ... | c b ...`.
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Per-pixel mean over bands.
pub fn band_average(cube: &[f32], bands: usize) -> Vec<f64> {
    cube.chunks_exact(bands).map(|s| s.iter().map(|v| *v as f64).sum::<f64>() / bands as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        assert_eq!((-3..7).map(|i| reflect(i, 3)).collect::<Vec<_>>(), vec![2, 1, 0, 0, 1, 2, 2, 1, 0, 0]);
        assert_eq!(reflect(-7, 3), 0);
    }

    #[test]
    fn bank_respects_nyquist() {
        let b = GaborBank::for_gsd(1.0).unwrap();
        assert_eq!(b.len(), 24);
        assert!(b.frequencies.iter().all(|f| *f < 0.5));
        assert!((b.frequencies[3] / b.frequencies[0] - 10.0).abs() < 1e-9);
        let fine = GaborBank::for_gsd(0.02).unwrap();
        assert_eq!(fine.frequencies, NOMINAL_FREQUENCIES.to_vec());
        assert!(GaborBank::new(vec![1.0], vec![0.0], 1.0).is_err());
    }

    #[test]
    fn constant_image_scales_by_dc_gain() {
        for f in GaborBank::for_gsd(1.0).unwrap().filters() {
            let out = f.magnitude(&vec![2.5; 64 * 64], 64, 64);
            let expected = 2.5 * f.dc_gain().norm();
            assert!(out.iter().all(|v| (v - expected).abs() <= 1e-12 + 1e-9 * expected));
        }
    }
}
