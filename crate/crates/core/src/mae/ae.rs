//! Dense autoencoder baseline trained on full spectra.

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::nn::{linear, linear_backward};
use super::scaler::BandScaler;
use super::train::{fit, LossCurve, Objective, OptimConfig};
use super::{MaeError, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    pub latent_dim: usize,
    /// Width of one ReLU hidden layer on each side; `None` gives a purely
    /// linear encoder and decoder.
    pub hidden: Option<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    /// Standardize each band with statistics of the training spectra.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            hidden: Some(64),
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 20,
            batch_size: 64,
            val_fraction: 0.1,
            standardize: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeModel {
    pub bands: usize,
    pub latent_dim: usize,
    pub hidden: Option<usize>,
    pub params: Vec<f64>,
    /// Applied to raw spectra by `embed`.
    pub scaler: BandScaler,
}

impl AeModel {
    /// Layer widths `[bands, (hidden,) latent, (hidden,) bands]`.
    fn widths(&self) -> Vec<usize> {
        match self.hidden {
            Some(h) => vec![self.bands, h, self.latent_dim, h, self.bands],
            None => vec![self.bands, self.latent_dim, self.bands],
        }
    }

    fn n_layers(&self) -> usize {
        self.widths().len() - 1
    }

    /// `(weight range start, bias range start)` per layer.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let w = self.widths();
        let mut at = 0;
        (0..w.len() - 1)
            .map(|l| {
                let wo = at;
                at += w[l] * w[l + 1];
                let bo = at;
                at += w[l + 1];
                (wo, bo)
            })
            .collect()
    }

    fn param_count(bands: usize, latent: usize, hidden: Option<usize>) -> usize {
        let m = Self { bands, latent_dim: latent, hidden, params: Vec::new(), scaler: BandScaler::identity(0) };
        let w = m.widths();
        (0..w.len() - 1).map(|l| w[l] * w[l + 1] + w[l + 1]).sum()
    }

    pub fn new(bands: usize, config: &AeConfig) -> Result<Self> {
        if bands == 0 || config.latent_dim == 0 || config.hidden == Some(0) {
            return Err(MaeError::Config("autoencoder widths must be positive".into()));
        }
        let mut m = Self { bands, latent_dim: config.latent_dim, hidden: config.hidden, params: Vec::new(), scaler: BandScaler::identity(bands) };
        m.params = vec![0.0; Self::param_count(bands, config.latent_dim, config.hidden)];
        let mut rng = rng::stream(config.seed, &[0x4145]);
        let w = m.widths();
        for (l, (wo, _)) in m.offsets().into_iter().enumerate() {
            let a = (6.0 / (w[l] + w[l + 1]) as f64).sqrt();
            let u = Uniform::new(-a, a).expect("valid bounds");
            m.params[wo..wo + w[l] * w[l + 1]].iter_mut().for_each(|v| *v = u.sample(&mut rng));
        }
        Ok(m)
    }

    /// Linear encoder and decoder that are both the identity.
    pub fn identity(bands: usize) -> Self {
        let mut m = Self {
            bands,
            latent_dim: bands,
            hidden: None,
            params: vec![0.0; Self::param_count(bands, bands, None)],
            scaler: BandScaler::identity(bands),
        };
        for (wo, _) in m.offsets() {
            for i in 0..bands {
                m.params[wo + i * bands + i] = 1.0;
            }
        }
        m
    }

    /// Activations after every layer; ReLU on all but the latent and output layers.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let w = self.widths();
        let latent_layer = self.n_layers() / 2 - 1;
        let mut acts = vec![x.to_vec()];
        for (l, (wo, bo)) in self.offsets().into_iter().enumerate() {
            let mut y = linear(&acts[l], 1, w[l], w[l + 1], &self.params[wo..bo], &self.params[bo..bo + w[l + 1]]);
            if l != latent_layer && l != self.n_layers() - 1 {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(y);
        }
        acts
    }

    /// Latent code of a raw spectrum.
    pub fn embed(&self, spectrum: &[f64]) -> Vec<f64> {
        self.activations(&self.scaler.apply(spectrum))[self.n_layers() / 2].clone()
    }

    /// Reconstruction of an already standardized spectrum.
    pub fn reconstruct(&self, spectrum: &[f64]) -> Vec<f64> {
        self.activations(spectrum).pop().expect("output layer")
    }

    pub fn loss(&self, spectrum: &[f64]) -> f64 {
        self.reconstruct(spectrum).iter().zip(spectrum).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / self.bands as f64
    }

    pub fn loss_and_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let acts = self.activations(x);
        let w = self.widths();
        let out = &acts[acts.len() - 1];
        let loss = out.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / self.bands as f64;
        let mut dy: Vec<f64> = out.iter().zip(x).map(|(a, b)| scale * 2.0 * (a - b) / self.bands as f64).collect();
        let offs = self.offsets();
        for l in (0..self.n_layers()).rev() {
            let (wo, bo) = offs[l];
            let (gw, gb) = grad[wo..bo + w[l + 1]].split_at_mut(bo - wo);
            let mut dx = linear_backward(&acts[l], &dy, 1, w[l], w[l + 1], &self.params[wo..bo], gw, gb);
            if l > 0 {
                // acts[l] is the output of layer l - 1; ReLU layers zero its gradient where inactive.
                let relu = l - 1 != self.n_layers() / 2 - 1;
                if relu {
                    dx.iter_mut().zip(&acts[l]).for_each(|(g, a)| {
                        if *a <= 0.0 {
                            *g = 0.0
                        }
                    });
                }
            }
            dy = dx;
        }
        loss
    }
}

/// Row-major spectra with `bands` channels.
pub fn ae_embedding(model: &AeModel, spectrum: &[f64]) -> Vec<f64> {
    model.embed(spectrum)
}

struct AeObjective<'a> {
    model: AeModel,
    spectra: &'a [f64],
}

impl Objective for AeObjective<'_> {
    fn params(&self) -> &[f64] {
        &self.model.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.model.params
    }

    fn loss(&self, sample: usize, _epoch: usize) -> f64 {
        let b = self.model.bands;
        self.model.loss(&self.spectra[sample * b..(sample + 1) * b])
    }

    fn loss_grad(&self, sample: usize, _epoch: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let b = self.model.bands;
        self.model.loss_and_grad(&self.spectra[sample * b..(sample + 1) * b], scale, grad)
    }

    fn val_loss(&self, sample: usize) -> f64 {
        self.loss(sample, 0)
    }
}

pub fn train_autoencoder(spectra: &[f64], bands: usize, config: &AeConfig) -> Result<(AeModel, LossCurve)> {
    train_autoencoder_from(AeModel::new(bands, config)?, spectra, config)
}

/// Continues training from an existing model. A model with an identity
/// scaler gets one fitted on `spectra` when `config.standardize` is set.
pub fn train_autoencoder_from(mut model: AeModel, spectra: &[f64], config: &AeConfig) -> Result<(AeModel, LossCurve)> {
    let bands = model.bands;
    if spectra.is_empty() || spectra.len() % bands != 0 || spectra.iter().any(|v| !v.is_finite()) {
        return Err(MaeError::Data(format!("{} values are not finite spectra of {bands} bands", spectra.len())));
    }
    if config.standardize && model.scaler.is_identity() {
        model.scaler = BandScaler::fit(spectra, bands);
    }
    let scaled = model.scaler.apply_all(spectra);
    let spectra = &scaled[..];
    let opt = OptimConfig {
        learning_rate: config.learning_rate,
        momentum: config.momentum,
        weight_decay: config.weight_decay,
        epochs: config.epochs,
        batch_size: config.batch_size,
        val_fraction: config.val_fraction,
        seed: config.seed,
    };
    let mut obj = AeObjective { model, spectra };
    let curve = fit(&mut obj, spectra.len() / bands, &opt)?;
    Ok((obj.model, curve))
}
