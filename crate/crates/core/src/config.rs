//! Experiment configuration file (TOML). Every field is optional; an empty
//! file yields the default experiment.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! records = "data/mitdb"
//! noise_record = "data/nstdb/em"
//!
//! [model]
//! embed_dim = 16
//! hidden = 128
//!
//! [train]
//! epochs = 40
//! use_rr = true
//! noise_mode = "mix-train"
//! ```
//!
//! The top-level `seed` is copied into every component seed when the file is
//! loaded, so one number fixes the whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{synth::SynthConfig, PrepConfig, SplitSpec};
use crate::model::ModelConfig;
use crate::quant::QatConfig;
use crate::training::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Directory of WFDB (or CSV) records.
    pub records: Option<PathBuf>,
    /// Electrode-motion noise record (header path without extension).
    pub noise_record: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub quantized: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub paths: Paths,
    pub model: ModelConfig,
    pub prep: PrepConfig,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub qat: QatConfig,
    pub synth: SynthConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.prep.seed = seed;
        self.split.seed = seed;
        self.train.seed = seed;
        self.qat.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.split.ratios.iter().sum::<u32>() == 0 {
            return Err(Error::Config("split ratios sum to zero".into()));
        }
        if self.split.n_folds < 2 {
            return Err(Error::Config("n_folds must be at least 2".into()));
        }
        Ok(())
    }

    /// Preprocessing with the denoising ablation flag applied.
    pub fn prep_config(&self) -> PrepConfig {
        PrepConfig {
            use_denoising: self.train.use_denoising,
            ..self.prep.clone()
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    /// Paths are excluded so moving files around keeps the hash.
    pub fn hash(&self) -> String {
        let canonical = Self {
            paths: Paths::default(),
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}
