use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::commands::{Stage, StageArgs};
use super::{PipelineConfig, PipelineError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path).map_err(io_err(path))?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub args: StageArgs,
    /// Hash of the configuration, arguments and input files the stage ran on.
    pub key: String,
    /// Output paths relative to the run directory, with their SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: PipelineConfig,
    pub seed: u64,
    /// External input files with their SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// In execution order; a rerun of the same stage and arguments replaces its record.
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config: &PipelineConfig) -> Self {
        Self { version: env!("CARGO_PKG_VERSION").into(), config: config.clone(), seed: config.seed, inputs: BTreeMap::new(), stages: Vec::new() }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Format { path: path.display().to_string(), reason: e.to_string() })
    }

    /// Loads the run directory's manifest, or starts one for `config`.
    pub(crate) fn load_or_new(config: &PipelineConfig) -> Result<Self> {
        let path = config.out.join(MANIFEST_FILE);
        if path.exists() {
            let mut m = Self::read(&path)?;
            m.config = config.clone();
            m.seed = config.seed;
            Ok(m)
        } else {
            Ok(Self::new(config))
        }
    }

    pub(crate) fn record(&mut self, rec: StageRecord) {
        self.stages.retain(|s| !(s.stage == rec.stage && s.args == rec.args));
        self.stages.push(rec);
    }

    /// Writes to a temporary file and renames it over the manifest.
    pub(crate) fn write_atomic(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&tmp, json).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }
}
