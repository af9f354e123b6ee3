//! Spectral masked autoencoder and a dense autoencoder baseline, both with
//! hand-written gradients in double precision.

mod ae;
mod checkpoint;
mod config;
pub mod nn;
mod model;
mod scaler;
mod tokens;
mod train;

use thiserror::Error;

pub use ae::{ae_embedding, train_autoencoder, train_autoencoder_from, AeConfig, AeModel};
pub use checkpoint::{ae_from_bytes, ae_to_bytes, load_ae, load_mae, mae_from_bytes, mae_to_bytes, save_ae, save_mae, CheckpointMetadata};
pub use config::MaeConfig;
pub use model::{masked_mse, BlockLayout, Encoded, Layout, MaeModel};
pub use scaler::BandScaler;
pub use tokens::{detokenize, masked_count, random_mask, tokenize, TokenSequence};
pub use train::{gradient_check, train_mae, GradientCheckReport, LossCurve, LossRow, OptimConfig, FD_STEP, RELATIVE_FLOOR};

#[derive(Debug, Error)]
pub enum MaeError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("invalid training data: {0}")]
    Data(String),
    #[error("training diverged in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("gradient check failed at parameter {index}: analytic {analytic}, numeric {numeric}, relative error {relative}")]
    GradientCheck { index: usize, analytic: f64, numeric: f64, relative: f64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, MaeError>;

/// [CLS] embedding of a spectrum with every token visible.
pub fn cls_embedding(model: &MaeModel, spectrum: &[f64]) -> Result<Vec<f64>> {
    model.cls_embedding(spectrum)
}

impl crate::classifiers::Extractor for MaeModel {
    fn output_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// Panics when the spectrum length differs from the model's band count.
    fn extract(&self, x: &[f64]) -> Vec<f64> {
        self.cls_embedding(x).expect("spectrum length matches the model")
    }
}

impl crate::classifiers::Extractor for AeModel {
    fn output_dim(&self) -> usize {
        self.latent_dim
    }

    fn extract(&self, x: &[f64]) -> Vec<f64> {
        self.embed(x)
    }
}
