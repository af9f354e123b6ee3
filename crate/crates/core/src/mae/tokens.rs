use rand::seq::index;
use rand::Rng;

use super::{MaeError, Result};

/// A spectrum cut into `n_tokens` tokens of `token_len` channels; the last
/// token is zero-padded.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<f64>,
    pub n_tokens: usize,
    pub token_len: usize,
    pub bands: usize,
    /// `mask[t]`: token `t` is hidden from the encoder.
    pub mask: Vec<bool>,
}

impl TokenSequence {
    pub fn token(&self, t: usize) -> &[f64] {
        &self.tokens[t * self.token_len..(t + 1) * self.token_len]
    }

    /// Channel `c` of token `t` holds real data rather than padding.
    pub fn is_valid(&self, t: usize, c: usize) -> bool {
        t * self.token_len + c < self.bands
    }

    pub fn padded_channels(&self) -> usize {
        self.n_tokens * self.token_len - self.bands
    }

    pub fn visible(&self) -> Vec<usize> {
        (0..self.n_tokens).filter(|&t| !self.mask[t]).collect()
    }

    pub fn masked(&self) -> Vec<usize> {
        (0..self.n_tokens).filter(|&t| self.mask[t]).collect()
    }
}

pub fn tokenize(spectrum: &[f64], token_len: usize) -> Result<TokenSequence> {
    if token_len == 0 || spectrum.len() < token_len {
        return Err(MaeError::Size(format!("{} channels cannot fill a token of {token_len}", spectrum.len())));
    }
    let n_tokens = spectrum.len().div_ceil(token_len);
    let mut tokens = spectrum.to_vec();
    tokens.resize(n_tokens * token_len, 0.0);
    Ok(TokenSequence { tokens, n_tokens, token_len, bands: spectrum.len(), mask: vec![false; n_tokens] })
}

pub fn detokenize(seq: &TokenSequence) -> Vec<f64> {
    seq.tokens[..seq.bands].to_vec()
}

/// `round(ratio * T)` clamped to `[1, T - 1]`.
pub fn masked_count(n_tokens: usize, ratio: f64) -> usize {
    ((ratio * n_tokens as f64).round() as usize).clamp(1, n_tokens.saturating_sub(1).max(1))
}

/// Uniform subset of `masked_count` tokens, without replacement.
pub fn random_mask<R: Rng>(seq: &TokenSequence, ratio: f64, rng: &mut R) -> TokenSequence {
    let mut out = seq.clone();
    out.mask = vec![false; seq.n_tokens];
    for t in index::sample(rng, seq.n_tokens, masked_count(seq.n_tokens, ratio)) {
        out.mask[t] = true;
    }
    out
}
