//! End-to-end runs: scene generation or ingestion, splitting, patch
//! features, pretraining, classification, evaluation and reporting. Every
//! command records its outputs in `manifest.json` so a run can be replayed.

mod commands;
mod config;
mod manifest;

use thiserror::Error;

pub use commands::{
    cmd_classify, cmd_evaluate, cmd_features, cmd_generate, cmd_pretrain, cmd_report, cmd_split, replay, Model, Report, ReportRow, Stage, StageArgs,
    MODELS,
};
pub use config::{ClassifierSettings, PipelineConfig, SolverChoice, SplitSettings};
pub use manifest::{sha256_file, RunManifest, StageRecord};

use crate::classifiers::ClassifierError;
use crate::mae::MaeError;
use crate::split::SplitError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("missing {path}; run `{command}` first")]
    MissingArtifact { path: String, command: &'static str },
    #[error("no feasible split exists for these proportions")]
    Infeasible,
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("replay mismatch:\n  {}", .0.join("\n  "))]
    ReplayMismatch(Vec<String>),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
    #[error(transparent)]
    Split(SplitError),
    #[error(transparent)]
    Features(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Mae(MaeError),
    #[error(transparent)]
    Classifier(ClassifierError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

impl From<SplitError> for PipelineError {
    fn from(e: SplitError) -> Self {
        match e {
            SplitError::Infeasible => Self::Infeasible,
            SplitError::TooLarge { .. } | SplitError::InvalidProblem(_) => Self::Config(vec![e.to_string()]),
            e => Self::Split(e),
        }
    }
}

impl From<MaeError> for PipelineError {
    fn from(e: MaeError) -> Self {
        match e {
            MaeError::Divergence { .. } => Self::Divergence(e.to_string()),
            MaeError::Config(_) => Self::Config(vec![e.to_string()]),
            e => Self::Mae(e),
        }
    }
}

impl From<ClassifierError> for PipelineError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Divergence(_) => Self::Divergence(e.to_string()),
            e => Self::Classifier(e),
        }
    }
}

impl PipelineError {
    /// Process exit code: 2 configuration, 3 infeasible split, 4 divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Infeasible => 3,
            Self::Divergence(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
