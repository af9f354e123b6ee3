//! Frozen feature extractors for the probe.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ClassifierError, Result};
use crate::rng;

pub trait Extractor: Sync {
    fn output_dim(&self) -> usize;
    fn extract(&self, x: &[f64]) -> Vec<f64>;
}

/// Passes features through unchanged.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl Extractor for Identity {
    fn output_dim(&self) -> usize {
        self.0
    }

    fn extract(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RandomExtractorKind {
    Dense,
    SpectralConv,
}

/// Randomly initialised network whose weights are fixed at construction.
/// Weights and biases are uniform in `+-1/sqrt(fan_in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomExtractor {
    kind: RandomExtractorKind,
    input_dim: usize,
    /// `(weights, biases)` per layer. Dense weights are
    /// `out x in`; conv weights are `out_ch x in_ch x kernel`.
    layers: Vec<(Vec<f64>, Vec<f64>)>,
    widths: Vec<usize>,
}

pub const CONV_KERNEL: usize = 7;
pub const CONV_STRIDE: usize = 2;

fn uniform_layer<R: Rng>(rng: &mut R, fan_in: usize, n_weights: usize, n_bias: usize) -> (Vec<f64>, Vec<f64>) {
    let a = 1.0 / (fan_in as f64).sqrt();
    let w = (0..n_weights).map(|_| rng.random_range(-a..a)).collect();
    let b = (0..n_bias).map(|_| rng.random_range(-a..a)).collect();
    (w, b)
}

fn conv_len(n: usize) -> usize {
    if n < CONV_KERNEL {
        0
    } else {
        (n - CONV_KERNEL) / CONV_STRIDE + 1
    }
}

impl RandomExtractor {
    /// Two ReLU dense layers `input -> hidden -> output`.
    pub fn dense(input_dim: usize, hidden: usize, output: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || output == 0 {
            return Err(ClassifierError::InvalidData("dense extractor widths must be positive".into()));
        }
        let mut rng = rng::stream(seed, &[0x44454e53]);
        let l1 = uniform_layer(&mut rng, input_dim, hidden * input_dim, hidden);
        let l2 = uniform_layer(&mut rng, hidden, output * hidden, output);
        Ok(Self { kind: RandomExtractorKind::Dense, input_dim, layers: vec![l1, l2], widths: vec![input_dim, hidden, output] })
    }

    /// Two ReLU 1-D convolutions (kernel 7, stride 2, no padding) over the
    /// spectrum, then global average pooling over positions.
    pub fn spectral_conv(input_dim: usize, channels: [usize; 2], seed: u64) -> Result<Self> {
        if conv_len(conv_len(input_dim)) == 0 || channels.contains(&0) {
            return Err(ClassifierError::InvalidData(format!("spectrum of {input_dim} bands too short for two convolutions")));
        }
        let mut rng = rng::stream(seed, &[0x434f4e56]);
        let l1 = uniform_layer(&mut rng, CONV_KERNEL, channels[0] * CONV_KERNEL, channels[0]);
        let l2 = uniform_layer(&mut rng, channels[0] * CONV_KERNEL, channels[1] * channels[0] * CONV_KERNEL, channels[1]);
        Ok(Self { kind: RandomExtractorKind::SpectralConv, input_dim, layers: vec![l1, l2], widths: vec![1, channels[0], channels[1]] })
    }

    pub fn kind(&self) -> RandomExtractorKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// SHA-256 over every weight and bias, little-endian.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (w, b) in &self.layers {
            for v in w.iter().chain(b) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn dense_forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            a = (0..n_out)
                .map(|o| (b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(&a).map(|(p, q)| p * q).sum::<f64>()).max(0.0))
                .collect();
        }
        a
    }

    fn conv_forward(&self, x: &[f64]) -> Vec<f64> {
        // Activations are channel-major: a[ch * len + pos].
        let mut a = x.to_vec();
        let mut len = x.len();
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let (cin, cout) = (self.widths[l], self.widths[l + 1]);
            let out_len = conv_len(len);
            let mut next = vec![0.0; cout * out_len];
            for o in 0..cout {
                for p in 0..out_len {
                    let mut s = b[o];
                    for i in 0..cin {
                        let wk = &w[(o * cin + i) * CONV_KERNEL..(o * cin + i + 1) * CONV_KERNEL];
                        let xs = &a[i * len + p * CONV_STRIDE..i * len + p * CONV_STRIDE + CONV_KERNEL];
                        s += wk.iter().zip(xs).map(|(p, q)| p * q).sum::<f64>();
                    }
                    next[o * out_len + p] = s.max(0.0);
                }
            }
            a = next;
            len = out_len;
        }
        let ch = self.widths[2];
        (0..ch).map(|o| a[o * len..(o + 1) * len].iter().sum::<f64>() / len as f64).collect()
    }
}

impl Extractor for RandomExtractor {
    fn output_dim(&self) -> usize {
        self.widths[2]
    }

    fn extract(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim, "extractor input dimension");
        match self.kind {
            RandomExtractorKind::Dense => self.dense_forward(x),
            RandomExtractorKind::SpectralConv => self.conv_forward(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let d = RandomExtractor::dense(30, 16, 8, 1).unwrap();
        assert_eq!(d.extract(&[0.3; 30]).len(), 8);
        assert_eq!(d, RandomExtractor::dense(30, 16, 8, 1).unwrap());
        assert_ne!(d.checksum(), RandomExtractor::dense(30, 16, 8, 2).unwrap().checksum());
        let c = RandomExtractor::spectral_conv(30, [4, 6], 1).unwrap();
        assert_eq!(c.extract(&[0.3; 30]).len(), 6);
        assert!(RandomExtractor::spectral_conv(12, [4, 6], 1).is_err());
    }

    #[test]
    fn conv_matches_hand_computation() {
        // 17 bands -> 6 positions -> 0 positions would fail; 21 -> 8 -> 1.
        let c = RandomExtractor::spectral_conv(21, [1, 1], 3).unwrap();
        let x: Vec<f64> = (0..21).map(|i| i as f64 / 10.0).collect();
        let (w1, b1) = &c.layers[0];
        let h: Vec<f64> = (0..8).map(|p| (b1[0] + (0..7).map(|k| w1[k] * x[2 * p + k]).sum::<f64>()).max(0.0)).collect();
        let (w2, b2) = &c.layers[1];
        let y = (b2[0] + (0..7).map(|k| w2[k] * h[k]).sum::<f64>()).max(0.0);
        assert!((c.extract(&x)[0] - y).abs() < 1e-12);
    }
}
