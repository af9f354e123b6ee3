//! Masked autoencoder over spectral tokens: a pre-norm transformer encoder
//! with a [CLS] token that sees visible tokens only, and a light decoder
//! that fills masked positions with a learnable mask token.

use std::ops::Range;

use rand_distr::{Distribution, Normal, Uniform};

use super::config::MaeConfig;
use super::scaler::BandScaler;
use super::nn::*;
use super::tokens::{tokenize, TokenSequence};
use super::{MaeError, Result};
use crate::rng;

/// Offsets of one pre-norm block of width `d` inside the flat parameter vector.
/// Layout: `ln1 (g, b) | attention | ln2 (g, b) | w1, b1 | w2, b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    pub start: usize,
    pub d: usize,
    pub heads: usize,
    pub ffn: usize,
}

impl BlockLayout {
    fn size(d: usize, ffn: usize) -> usize {
        4 * d + attention_params(d) + ffn * d + ffn + d * ffn + d
    }

    fn ln1(&self) -> (Range<usize>, Range<usize>) {
        (self.start..self.start + self.d, self.start + self.d..self.start + 2 * self.d)
    }

    fn attn(&self) -> Range<usize> {
        let s = self.start + 2 * self.d;
        s..s + attention_params(self.d)
    }

    fn ln2(&self) -> (Range<usize>, Range<usize>) {
        let s = self.attn().end;
        (s..s + self.d, s + self.d..s + 2 * self.d)
    }

    fn ffn1(&self) -> (Range<usize>, Range<usize>) {
        let s = self.ln2().1.end;
        (s..s + self.ffn * self.d, s + self.ffn * self.d..s + self.ffn * self.d + self.ffn)
    }

    fn ffn2(&self) -> (Range<usize>, Range<usize>) {
        let s = self.ffn1().1.end;
        (s..s + self.d * self.ffn, s + self.d * self.ffn..s + self.d * self.ffn + self.d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub embed_w: Range<usize>,
    pub embed_b: Range<usize>,
    pub cls: Range<usize>,
    pub encoder: Vec<BlockLayout>,
    pub enc_ln_g: Range<usize>,
    pub enc_ln_b: Range<usize>,
    pub dec_embed_w: Range<usize>,
    pub dec_embed_b: Range<usize>,
    pub mask_token: Range<usize>,
    pub decoder: Vec<BlockLayout>,
    pub dec_ln_g: Range<usize>,
    pub dec_ln_b: Range<usize>,
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(c: &MaeConfig) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            at += n;
            at - n..at
        };
        let (l, d, dd) = (c.token_len, c.embed_dim, c.decoder_dim);
        let embed_w = take(d * l);
        let embed_b = take(d);
        let cls = take(d);
        let encoder = (0..c.depth)
            .map(|_| {
                let r = take(BlockLayout::size(d, c.ffn_mult * d));
                BlockLayout { start: r.start, d, heads: c.n_heads, ffn: c.ffn_mult * d }
            })
            .collect();
        let enc_ln_g = take(d);
        let enc_ln_b = take(d);
        let dec_embed_w = take(dd * d);
        let dec_embed_b = take(dd);
        let mask_token = take(dd);
        let decoder = (0..c.decoder_depth)
            .map(|_| {
                let r = take(BlockLayout::size(dd, c.ffn_mult * dd));
                BlockLayout { start: r.start, d: dd, heads: c.decoder_heads, ffn: c.ffn_mult * dd }
            })
            .collect();
        let dec_ln_g = take(dd);
        let dec_ln_b = take(dd);
        let head_w = take(l * dd);
        let head_b = take(l);
        Self {
            embed_w,
            embed_b,
            cls,
            encoder,
            enc_ln_g,
            enc_ln_b,
            dec_embed_w,
            dec_embed_b,
            mask_token,
            decoder,
            dec_ln_g,
            dec_ln_b,
            head_w,
            head_b,
            total: at,
        }
    }

    /// Ranges of every layer-norm gain, initialised to one.
    fn gains(&self) -> Vec<Range<usize>> {
        let mut g = vec![self.enc_ln_g.clone(), self.dec_ln_g.clone()];
        for b in self.encoder.iter().chain(&self.decoder) {
            g.push(b.ln1().0);
            g.push(b.ln2().0);
        }
        g
    }

    /// `(range, fan_in, fan_out)` of every weight matrix.
    fn matrices(&self, c: &MaeConfig) -> Vec<(Range<usize>, usize, usize)> {
        let (l, d, dd) = (c.token_len, c.embed_dim, c.decoder_dim);
        let mut m = vec![(self.embed_w.clone(), l, d), (self.dec_embed_w.clone(), d, dd), (self.head_w.clone(), dd, l)];
        for b in self.encoder.iter().chain(&self.decoder) {
            let a = b.attn();
            for i in 0..4 {
                let s = a.start + i * (b.d * b.d + b.d);
                m.push((s..s + b.d * b.d, b.d, b.d));
            }
            m.push((b.ffn1().0, b.d, b.ffn));
            m.push((b.ffn2().0, b.ffn, b.d));
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaeModel {
    pub config: MaeConfig,
    pub bands: usize,
    pub layout: Layout,
    pub params: Vec<f64>,
    /// Applied to raw spectra before tokenization.
    pub scaler: BandScaler,
}

/// Encoder output for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub cls: Vec<f64>,
    /// `visible.len() x d`, in visible order.
    pub tokens: Vec<f64>,
    pub visible: Vec<usize>,
}

pub(crate) struct BlockCache {
    ln1: LnCache,
    attn: AttnCache,
    ln2: LnCache,
    h2: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

pub(crate) struct ForwardCache {
    visible: Vec<usize>,
    enc_blocks: Vec<BlockCache>,
    enc_ln: LnCache,
    enc_out: Vec<f64>,
    dec_blocks: Vec<BlockCache>,
    dec_ln: LnCache,
    dec_out: Vec<f64>,
    recon: Vec<f64>,
}

fn block_forward(p: &[f64], b: &BlockLayout, x: &[f64], n: usize) -> (Vec<f64>, BlockCache) {
    let d = b.d;
    let (g1, b1) = b.ln1();
    let (h1, ln1) = layer_norm(x, n, d, &p[g1], &p[b1]);
    let (a, attn) = attention(&h1, n, d, b.heads, &p[b.attn()]);
    let x1: Vec<f64> = x.iter().zip(&a).map(|(u, v)| u + v).collect();
    let (g2, b2) = b.ln2();
    let (h2, ln2) = layer_norm(&x1, n, d, &p[g2], &p[b2]);
    let (w1, c1) = b.ffn1();
    let pre = linear(&h2, n, d, b.ffn, &p[w1], &p[c1]);
    let act: Vec<f64> = pre.iter().map(|v| gelu(*v)).collect();
    let (w2, c2) = b.ffn2();
    let f = linear(&act, n, b.ffn, d, &p[w2], &p[c2]);
    let y = x1.iter().zip(&f).map(|(u, v)| u + v).collect();
    (y, BlockCache { ln1, attn, ln2, h2, pre, act })
}

fn block_backward(p: &[f64], g: &mut [f64], b: &BlockLayout, c: &BlockCache, dy: &[f64], n: usize) -> Vec<f64> {
    let d = b.d;
    let (w2, c2) = b.ffn2();
    let (gw, gb) = g[w2.start..c2.end].split_at_mut(w2.len());
    let dact = linear_backward(&c.act, dy, n, b.ffn, d, &p[w2], gw, gb);
    let dpre: Vec<f64> = dact.iter().zip(&c.pre).map(|(g, x)| g * gelu_grad(*x)).collect();
    let (w1, c1) = b.ffn1();
    let (gw, gb) = g[w1.start..c1.end].split_at_mut(w1.len());
    let dh2 = linear_backward(&c.h2, &dpre, n, d, b.ffn, &p[w1], gw, gb);
    let (g2, b2) = b.ln2();
    let (gg, gb) = g[g2.start..b2.end].split_at_mut(d);
    let mut dx1 = layer_norm_backward(&c.ln2, &dh2, n, d, &p[g2.clone()], gg, gb);
    for (a, v) in dx1.iter_mut().zip(dy) {
        *a += v;
    }
    let dh1 = attention_backward(&c.attn, &dx1, n, d, b.heads, &p[b.attn()], &mut g[b.attn()]);
    let (g1, b1) = b.ln1();
    let (gg, gb) = g[g1.start..b1.end].split_at_mut(d);
    let mut dx = layer_norm_backward(&c.ln1, &dh1, n, d, &p[g1.clone()], gg, gb);
    for (a, v) in dx.iter_mut().zip(&dx1) {
        *a += v;
    }
    dx
}

impl MaeModel {
    /// Xavier-uniform matrices, zero biases, unit layer-norm gains, and
    /// N(0, 0.02) [CLS] and mask tokens. The scaler starts as the identity.
    pub fn new(config: MaeConfig, bands: usize) -> Result<Self> {
        config.validate(bands)?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = rng::stream(config.seed, &[0x4d41_4549_4e49]);
        for (r, fan_in, fan_out) in layout.matrices(&config) {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let u = Uniform::new(-a, a).expect("valid bounds");
            params[r].iter_mut().for_each(|v| *v = u.sample(&mut rng));
        }
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        for r in [layout.cls.clone(), layout.mask_token.clone()] {
            params[r].iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        }
        for r in layout.gains() {
            params[r].iter_mut().for_each(|v| *v = 1.0);
        }
        Ok(Self { config, bands, layout, params, scaler: BandScaler::identity(bands) })
    }

    pub fn from_params(config: MaeConfig, bands: usize, params: Vec<f64>) -> Result<Self> {
        config.validate(bands)?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(MaeError::Config(format!("{} parameters, layout needs {}", params.len(), layout.total)));
        }
        Ok(Self { config, bands, layout, params, scaler: BandScaler::identity(bands) })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.config.n_tokens(self.bands)
    }

    fn check(&self, seq: &TokenSequence) -> Result<()> {
        if seq.token_len != self.config.token_len || seq.bands != self.bands {
            return Err(MaeError::Config(format!(
                "sequence of {} bands in tokens of {} for a model of {} bands in tokens of {}",
                seq.bands, seq.token_len, self.bands, self.config.token_len
            )));
        }
        Ok(())
    }

    fn encode_cached(&self, seq: &TokenSequence) -> (Vec<f64>, Vec<usize>, Vec<BlockCache>, LnCache) {
        let (p, l) = (&self.params, &self.layout);
        let (d, tl) = (self.config.embed_dim, self.config.token_len);
        let visible = seq.visible();
        let n = visible.len() + 1;
        let mut x = Vec::with_capacity(n * d);
        x.extend_from_slice(&p[l.cls.clone()]);
        let vis_tokens: Vec<f64> = visible.iter().flat_map(|&t| seq.token(t).to_vec()).collect();
        let emb = linear(&vis_tokens, visible.len(), tl, d, &p[l.embed_w.clone()], &p[l.embed_b.clone()]);
        for (i, &t) in visible.iter().enumerate() {
            let pe = positional_encoding(t, d);
            x.extend(emb[i * d..(i + 1) * d].iter().zip(&pe).map(|(a, b)| a + b));
        }
        let mut caches = Vec::with_capacity(l.encoder.len());
        for b in &l.encoder {
            let (y, c) = block_forward(p, b, &x, n);
            caches.push(c);
            x = y;
        }
        let (out, ln) = layer_norm(&x, n, d, &p[l.enc_ln_g.clone()], &p[l.enc_ln_b.clone()]);
        (out, visible, caches, ln)
    }

    /// Runs the encoder on [CLS] plus the visible tokens.
    pub fn encode(&self, seq: &TokenSequence) -> Result<Encoded> {
        self.check(seq)?;
        let d = self.config.embed_dim;
        let (out, visible, _, _) = self.encode_cached(seq);
        Ok(Encoded { cls: out[..d].to_vec(), tokens: out[d..].to_vec(), visible })
    }

    /// [CLS] output of a raw spectrum with every token visible.
    pub fn cls_embedding(&self, spectrum: &[f64]) -> Result<Vec<f64>> {
        if spectrum.len() != self.bands {
            return Err(MaeError::Size(format!("spectrum has {} bands, model expects {}", spectrum.len(), self.bands)));
        }
        let seq = tokenize(&self.scaler.apply(spectrum), self.config.token_len)?;
        Ok(self.encode(&seq)?.cls)
    }

    fn decode(&self, seq: &TokenSequence, enc_out: &[f64], visible: &[usize]) -> (Vec<f64>, Vec<BlockCache>, LnCache, Vec<f64>) {
        let (p, l) = (&self.params, &self.layout);
        let (d, dd, tl) = (self.config.embed_dim, self.config.decoder_dim, self.config.token_len);
        let t = seq.n_tokens;
        let z = linear(enc_out, visible.len() + 1, d, dd, &p[l.dec_embed_w.clone()], &p[l.dec_embed_b.clone()]);
        let mut x = vec![0.0; (t + 1) * dd];
        x[..dd].copy_from_slice(&z[..dd]);
        let mask_tok = &p[l.mask_token.clone()];
        for pos in 0..t {
            let pe = positional_encoding(pos, dd);
            let row = &mut x[(pos + 1) * dd..(pos + 2) * dd];
            let src: &[f64] = match visible.iter().position(|&v| v == pos) {
                Some(i) => &z[(i + 1) * dd..(i + 2) * dd],
                None => mask_tok,
            };
            for k in 0..dd {
                row[k] = src[k] + pe[k];
            }
        }
        let n = t + 1;
        let mut caches = Vec::with_capacity(l.decoder.len());
        for b in &l.decoder {
            let (y, c) = block_forward(p, b, &x, n);
            caches.push(c);
            x = y;
        }
        let (out, ln) = layer_norm(&x, n, dd, &p[l.dec_ln_g.clone()], &p[l.dec_ln_b.clone()]);
        let recon = linear(&out[dd..], t, dd, tl, &p[l.head_w.clone()], &p[l.head_b.clone()]);
        (recon, caches, ln, out)
    }

    /// Reconstruction (`T x token_len`) and mean squared error over masked,
    /// non-padding channels.
    pub fn decode_and_loss(&self, seq: &TokenSequence, encoded: &Encoded) -> Result<(Vec<f64>, f64)> {
        self.check(seq)?;
        let d = self.config.embed_dim;
        let mut enc_out = encoded.cls.clone();
        enc_out.extend_from_slice(&encoded.tokens);
        if enc_out.len() != (encoded.visible.len() + 1) * d {
            return Err(MaeError::Config("encoder output does not match its visible set".into()));
        }
        let (recon, _, _, _) = self.decode(seq, &enc_out, &encoded.visible);
        Ok((recon.clone(), masked_mse(seq, &recon)))
    }

    pub(crate) fn forward(&self, seq: &TokenSequence) -> (f64, ForwardCache) {
        let (enc_out, visible, enc_blocks, enc_ln) = self.encode_cached(seq);
        let (recon, dec_blocks, dec_ln, dec_out) = self.decode(seq, &enc_out, &visible);
        let loss = masked_mse(seq, &recon);
        (loss, ForwardCache { visible, enc_blocks, enc_ln, enc_out, dec_blocks, dec_ln, dec_out, recon })
    }

    /// Masked reconstruction loss of one sequence; `scale * dloss/dparams`
    /// is added to `grad`.
    pub fn loss_and_grad(&self, seq: &TokenSequence, scale: f64, grad: &mut [f64]) -> Result<f64> {
        self.check(seq)?;
        let (loss, c) = self.forward(seq);
        self.backward(seq, &c, scale, grad);
        Ok(loss)
    }

    pub(crate) fn backward(&self, seq: &TokenSequence, c: &ForwardCache, scale: f64, g: &mut [f64]) {
        let (p, l) = (&self.params, &self.layout);
        let (d, dd, tl) = (self.config.embed_dim, self.config.decoder_dim, self.config.token_len);
        let t = seq.n_tokens;
        let count = masked_channel_count(seq);
        let mut drecon = vec![0.0; t * tl];
        if count > 0 {
            for pos in seq.masked() {
                for ch in 0..tl {
                    if seq.is_valid(pos, ch) {
                        let k = pos * tl + ch;
                        drecon[k] = scale * 2.0 * (c.recon[k] - seq.tokens[k]) / count as f64;
                    }
                }
            }
        }
        // Head; the [CLS] row of the decoder output receives no gradient.
        let mut ddec = vec![0.0; (t + 1) * dd];
        {
            let (gw, gb) = g[l.head_w.start..l.head_b.end].split_at_mut(l.head_w.len());
            let dout = linear_backward(&c.dec_out[dd..], &drecon, t, dd, tl, &p[l.head_w.clone()], gw, gb);
            ddec[dd..].copy_from_slice(&dout);
        }
        let (gg, gb) = g[l.dec_ln_g.start..l.dec_ln_b.end].split_at_mut(dd);
        let mut dx = layer_norm_backward(&c.dec_ln, &ddec, t + 1, dd, &p[l.dec_ln_g.clone()], gg, gb);
        for (b, bc) in l.decoder.iter().zip(&c.dec_blocks).rev() {
            dx = block_backward(p, g, b, bc, &dx, t + 1);
        }
        // Decoder input: row 0 and visible rows come from the decoder
        // embedding, masked rows from the mask token.
        let nv = c.visible.len();
        let mut dz = vec![0.0; (nv + 1) * dd];
        dz[..dd].copy_from_slice(&dx[..dd]);
        for pos in 0..t {
            let row = &dx[(pos + 1) * dd..(pos + 2) * dd];
            match c.visible.iter().position(|&v| v == pos) {
                Some(i) => dz[(i + 1) * dd..(i + 2) * dd].copy_from_slice(row),
                None => {
                    for (a, b) in g[l.mask_token.clone()].iter_mut().zip(row) {
                        *a += b;
                    }
                }
            }
        }
        let (gw, gb) = g[l.dec_embed_w.start..l.dec_embed_b.end].split_at_mut(l.dec_embed_w.len());
        let denc = linear_backward(&c.enc_out, &dz, nv + 1, d, dd, &p[l.dec_embed_w.clone()], gw, gb);
        let (gg, gb) = g[l.enc_ln_g.start..l.enc_ln_b.end].split_at_mut(d);
        let mut dx = layer_norm_backward(&c.enc_ln, &denc, nv + 1, d, &p[l.enc_ln_g.clone()], gg, gb);
        for (b, bc) in l.encoder.iter().zip(&c.enc_blocks).rev() {
            dx = block_backward(p, g, b, bc, &dx, nv + 1);
        }
        for (a, b) in g[l.cls.clone()].iter_mut().zip(&dx[..d]) {
            *a += b;
        }
        let vis_tokens: Vec<f64> = c.visible.iter().flat_map(|&v| seq.token(v).to_vec()).collect();
        let (gw, gb) = g[l.embed_w.start..l.embed_b.end].split_at_mut(l.embed_w.len());
        linear_backward(&vis_tokens, &dx[d..], nv, tl, d, &p[l.embed_w.clone()], gw, gb);
    }
}

fn masked_channel_count(seq: &TokenSequence) -> usize {
    seq.masked().iter().map(|&t| (0..seq.token_len).filter(|&c| seq.is_valid(t, c)).count()).sum()
}

/// Mean squared error over masked, non-padding channels (0 when there are none).
pub fn masked_mse(seq: &TokenSequence, recon: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in seq.masked() {
        for c in 0..seq.token_len {
            if seq.is_valid(t, c) {
                let k = t * seq.token_len + c;
                sum += (recon[k] - seq.tokens[k]).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
