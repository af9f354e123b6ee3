use serde::{Deserialize, Serialize};

use super::{MaeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaeConfig {
    /// Channels per token.
    pub token_len: usize,
    pub embed_dim: usize,
    pub n_heads: usize,
    pub depth: usize,
    pub decoder_depth: usize,
    pub decoder_dim: usize,
    pub decoder_heads: usize,
    /// Feed-forward width as a multiple of the block width.
    pub ffn_mult: usize,
    pub mask_ratio: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of the spectra held out for the validation loss.
    pub val_fraction: f64,
    /// Draw fresh masks every epoch; otherwise each spectrum keeps one mask.
    pub resample_masks: bool,
    /// Standardize each band with statistics of the training spectra.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for MaeConfig {
    fn default() -> Self {
        Self {
            token_len: 10,
            embed_dim: 32,
            n_heads: 32,
            depth: 2,
            decoder_depth: 1,
            decoder_dim: 32,
            decoder_heads: 32,
            ffn_mult: 2,
            mask_ratio: 0.7,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 20,
            batch_size: 64,
            val_fraction: 0.1,
            resample_masks: true,
            standardize: true,
            seed: 0,
        }
    }
}

impl MaeConfig {
    /// Wider preset for accuracy rather than ablation parity.
    pub fn wide() -> Self {
        Self { embed_dim: 128, n_heads: 128, decoder_dim: 128, decoder_heads: 128, ..Self::default() }
    }

    pub fn n_tokens(&self, bands: usize) -> usize {
        bands.div_ceil(self.token_len)
    }

    pub fn validate(&self, bands: usize) -> Result<()> {
        let bad = |m: String| Err(MaeError::Config(m));
        if self.token_len == 0 || bands < self.token_len {
            return bad(format!("{bands} bands cannot fill a token of {}", self.token_len));
        }
        if self.n_tokens(bands) < 2 {
            return bad(format!("{bands} bands give fewer than 2 tokens of {}", self.token_len));
        }
        if self.embed_dim == 0 || self.n_heads == 0 || self.embed_dim % self.n_heads != 0 {
            return bad(format!("embed_dim {} not divisible by n_heads {}", self.embed_dim, self.n_heads));
        }
        if self.decoder_dim == 0 || self.decoder_heads == 0 || self.decoder_dim % self.decoder_heads != 0 {
            return bad(format!("decoder_dim {} not divisible by decoder_heads {}", self.decoder_dim, self.decoder_heads));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return bad(format!("mask_ratio {} outside (0, 1)", self.mask_ratio));
        }
        if self.ffn_mult == 0 || self.batch_size == 0 {
            return bad("ffn_mult and batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} outside [0, 1)", self.val_fraction));
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("momentum", self.momentum), ("weight_decay", self.weight_decay)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}
