//! Checkpoint files.
//!
//! MAE binary layout, all little-endian:
//!
//! ```text
//! magic      8 bytes  "HBMAE002"
//! header    19 x 8    bands, token_len, embed_dim, n_heads, depth,
//!                     decoder_depth, decoder_dim, decoder_heads, ffn_mult (u64),
//!                     mask_ratio, learning_rate, momentum, weight_decay (f64),
//!                     epochs, batch_size (u64), val_fraction (f64),
//!                     resample_masks, standardize (u64 0/1), seed (u64)
//! scaler     2 x bands x 8   per-band mean, then scale (f64)
//! n_params   8        u64
//! params     n x 8    f64
//! ```
//!
//! The autoencoder uses magic "HBAE0002", a header of bands, latent_dim and
//! hidden width (0 for none), the scaler, then `n_params` and the parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ae::AeModel;
use super::config::MaeConfig;
use super::model::MaeModel;
use super::scaler::BandScaler;
use super::train::LossCurve;
use super::{MaeError, Result};

const MAE_MAGIC: &[u8; 8] = b"HBMAE002";
const AE_MAGIC: &[u8; 8] = b"HBAE0002";

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> MaeError + '_ {
    move |source| MaeError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, reason: &str) -> MaeError {
    MaeError::Format { path: path.display().to_string(), reason: reason.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn word(&mut self) -> Option<[u8; 8]> {
        let w = self.bytes.get(self.at..self.at + 8)?.try_into().ok()?;
        self.at += 8;
        Some(w)
    }

    fn u64(&mut self) -> Option<u64> {
        self.word().map(u64::from_le_bytes)
    }

    fn usize(&mut self) -> Option<usize> {
        self.u64().map(|v| v as usize)
    }

    fn f64(&mut self) -> Option<f64> {
        self.word().map(f64::from_le_bytes)
    }

    fn scaler(&mut self, bands: usize) -> Option<BandScaler> {
        let mean = (0..bands).map(|_| self.f64()).collect::<Option<Vec<_>>>()?;
        let scale = (0..bands).map(|_| self.f64()).collect::<Option<Vec<_>>>()?;
        Some(BandScaler { mean, scale })
    }

    fn params(&mut self) -> Option<Vec<f64>> {
        let n = self.usize()?;
        if self.bytes.len() != self.at + n * 8 {
            return None;
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

fn push_scaler(out: &mut Vec<u8>, s: &BandScaler) {
    for v in s.mean.iter().chain(&s.scale) {
        out.extend(v.to_le_bytes());
    }
}

fn push_params(out: &mut Vec<u8>, params: &[f64]) {
    out.extend((params.len() as u64).to_le_bytes());
    for p in params {
        out.extend(p.to_le_bytes());
    }
}

pub fn mae_to_bytes(model: &MaeModel) -> Vec<u8> {
    let c = &model.config;
    let mut out = MAE_MAGIC.to_vec();
    for v in [model.bands, c.token_len, c.embed_dim, c.n_heads, c.depth, c.decoder_depth, c.decoder_dim, c.decoder_heads, c.ffn_mult] {
        out.extend((v as u64).to_le_bytes());
    }
    for v in [c.mask_ratio, c.learning_rate, c.momentum, c.weight_decay] {
        out.extend(v.to_le_bytes());
    }
    out.extend((c.epochs as u64).to_le_bytes());
    out.extend((c.batch_size as u64).to_le_bytes());
    out.extend(c.val_fraction.to_le_bytes());
    out.extend((c.resample_masks as u64).to_le_bytes());
    out.extend((c.standardize as u64).to_le_bytes());
    out.extend(c.seed.to_le_bytes());
    push_scaler(&mut out, &model.scaler);
    push_params(&mut out, &model.params);
    out
}

pub fn mae_from_bytes(bytes: &[u8], path: &Path) -> Result<MaeModel> {
    if bytes.get(..8) != Some(MAE_MAGIC) {
        return Err(format_err(path, "not an MAE checkpoint"));
    }
    let mut r = Reader { bytes, at: 8 };
    let parsed = (|| {
        let bands = r.usize()?;
        let config = MaeConfig {
            token_len: r.usize()?,
            embed_dim: r.usize()?,
            n_heads: r.usize()?,
            depth: r.usize()?,
            decoder_depth: r.usize()?,
            decoder_dim: r.usize()?,
            decoder_heads: r.usize()?,
            ffn_mult: r.usize()?,
            mask_ratio: r.f64()?,
            learning_rate: r.f64()?,
            momentum: r.f64()?,
            weight_decay: r.f64()?,
            epochs: r.usize()?,
            batch_size: r.usize()?,
            val_fraction: r.f64()?,
            resample_masks: r.u64()? != 0,
            standardize: r.u64()? != 0,
            seed: r.u64()?,
        };
        Some((bands, config, r.scaler(bands)?, r.params()?))
    })();
    let (bands, config, scaler, params) = parsed.ok_or_else(|| format_err(path, "truncated or oversized checkpoint"))?;
    Ok(MaeModel { scaler, ..MaeModel::from_params(config, bands, params)? })
}

pub fn ae_to_bytes(model: &AeModel) -> Vec<u8> {
    let mut out = AE_MAGIC.to_vec();
    for v in [model.bands, model.latent_dim, model.hidden.unwrap_or(0)] {
        out.extend((v as u64).to_le_bytes());
    }
    push_scaler(&mut out, &model.scaler);
    push_params(&mut out, &model.params);
    out
}

pub fn ae_from_bytes(bytes: &[u8], path: &Path) -> Result<AeModel> {
    if bytes.get(..8) != Some(AE_MAGIC) {
        return Err(format_err(path, "not an autoencoder checkpoint"));
    }
    let mut r = Reader { bytes, at: 8 };
    let parsed = (|| {
        let (bands, latent_dim, hidden) = (r.usize()?, r.usize()?, r.usize()?);
        Some((bands, latent_dim, hidden, r.scaler(bands)?, r.params()?))
    })();
    let (bands, latent_dim, hidden, scaler, params) = parsed.ok_or_else(|| format_err(path, "truncated or oversized checkpoint"))?;
    let hidden = (hidden > 0).then_some(hidden);
    let m = AeModel::new(bands, &super::ae::AeConfig { latent_dim, hidden, ..Default::default() })?;
    if params.len() != m.params.len() {
        return Err(format_err(path, "parameter count does not match the header"));
    }
    Ok(AeModel { params, scaler, ..m })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub kind: String,
    pub bands: usize,
    pub n_params: usize,
    pub epochs: usize,
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
    /// SHA-256 of the binary checkpoint.
    pub sha256: String,
    pub config: serde_json::Value,
}

fn write_all(path: &Path, bin: &[u8], meta: CheckpointMetadata, curve: &LossCurve) -> Result<()> {
    fs::write(path, bin).map_err(io_err(path))?;
    let json_path = path.with_extension("json");
    let json = serde_json::to_string_pretty(&meta).map_err(|e| format_err(&json_path, &e.to_string()))?;
    fs::write(&json_path, json).map_err(io_err(&json_path))?;
    let csv_path = path.with_extension("loss.csv");
    fs::write(&csv_path, curve.to_csv()).map_err(io_err(&csv_path))
}

/// Writes `path` (binary), `path.json` (metadata) and `path.loss.csv`
/// (with the extension replaced).
pub fn save_mae(model: &MaeModel, curve: &LossCurve, path: &Path) -> Result<()> {
    let bin = mae_to_bytes(model);
    let meta = CheckpointMetadata {
        kind: "mae".into(),
        bands: model.bands,
        n_params: model.n_params(),
        epochs: curve.rows.len().saturating_sub(1),
        final_train_loss: curve.final_train_loss(),
        final_val_loss: curve.final_val_loss(),
        sha256: hex::encode(Sha256::digest(&bin)),
        config: serde_json::to_value(&model.config).expect("config serializes"),
    };
    write_all(path, &bin, meta, curve)
}

pub fn load_mae(path: &Path) -> Result<MaeModel> {
    mae_from_bytes(&fs::read(path).map_err(io_err(path))?, path)
}

pub fn save_ae(model: &AeModel, curve: &LossCurve, path: &Path) -> Result<()> {
    let bin = ae_to_bytes(model);
    let meta = CheckpointMetadata {
        kind: "ae".into(),
        bands: model.bands,
        n_params: model.params.len(),
        epochs: curve.rows.len().saturating_sub(1),
        final_train_loss: curve.final_train_loss(),
        final_val_loss: curve.final_val_loss(),
        sha256: hex::encode(Sha256::digest(&bin)),
        config: serde_json::json!({ "latent_dim": model.latent_dim, "hidden": model.hidden }),
    };
    write_all(path, &bin, meta, curve)
}

pub fn load_ae(path: &Path) -> Result<AeModel> {
    ae_from_bytes(&fs::read(path).map_err(io_err(path))?, path)
}
