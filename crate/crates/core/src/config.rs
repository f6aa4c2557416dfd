//! Experiment configuration: one TOML file with a section per subsystem.
//! Every field has a default, so an empty file is a valid config.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adhesion::AdhesionConfig;
use crate::curriculum::CurriculumConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvalProtocol;
use crate::learning::{NetworkSpec, PpoConfig, TrainConfig};
use crate::model::RobotModel;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: RobotModel,
    pub env: EnvConfig,
    pub adhesion: AdhesionConfig,
    pub curriculum: CurriculumConfig,
    pub network: NetworkSpec,
    pub ppo: PpoConfig,
    pub train: TrainConfig,
    pub eval: EvalProtocol,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.env.validate()?;
        self.adhesion.validate()?;
        self.curriculum.validate()?;
        self.network.validate()?;
        self.ppo.validate()?;
        self.train.validate()?;
        self.eval.validate()
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Comment line stamped at the top of every emitted file.
    pub fn header(&self) -> String {
        format!("# epmclimb {VERSION} config={}", self.hash())
    }
}
