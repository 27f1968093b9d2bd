//! Run configuration file.
//!
//! ```toml
//! [data]
//! manifest = "data/manifest.toml"   # omit to synthesize in memory
//!
//! [data.synthetic]
//! noise_sigma = 0.0
//!
//! [arch]
//! conv_out = 30
//!
//! [train]
//! seed = 7
//! model = "hybrid"
//!
//! [adm]
//! objective = "validation"
//!
//! [quant]
//! bits = 16
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_trials, synth_session, PreprocessConfig, SyntheticConfig, Trial};
use crate::error::{Error, Result};
use crate::pipeline::{AdmSettings, ArchConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Trial manifest; relative paths resolve against the config file.
    pub manifest: Option<PathBuf>,
    pub subject: Option<String>,
    /// Synthetic session size when no manifest is given.
    pub n_trials: usize,
    /// Trailing synthetic trials marked as the online (test) session.
    pub n_online: usize,
    pub synthetic: SyntheticConfig,
    /// Filtering before windowing; absent means raw data.
    pub preprocess: Option<PreprocessConfig>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            subject: None,
            n_trials: 60,
            n_online: 12,
            synthetic: SyntheticConfig::default(),
            preprocess: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantConfig {
    /// Stored weight precision; 32 keeps float weights.
    pub bits: u32,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self { bits: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub adm: AdmSettings,
    pub quant: QuantConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving a relative manifest path
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let (Some(m), Some(dir)) = (&cfg.data.manifest, path.parent()) {
            if m.is_relative() {
                cfg.data.manifest = Some(dir.join(m));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.train.validate()?;
        self.adm.validate()?;
        if !(matches!(self.quant.bits, 2..=16) || self.quant.bits == 32) {
            return Err(Error::Config(format!("quant.bits must be 2..=16 or 32, got {}", self.quant.bits)));
        }
        if self.data.manifest.is_none() {
            self.data
                .synthetic
                .validate()
                .map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("data.synthetic.{m}")),
                    other => other,
                })?;
            if self.data.n_online == 0 || self.data.n_online >= self.data.n_trials {
                return Err(Error::Config(format!(
                    "data.n_online must lie in 1..{} (n_trials), got {}",
                    self.data.n_trials, self.data.n_online
                )));
            }
        }
        Ok(())
    }

    /// The seed, which training commands require.
    pub fn require_seed(&self) -> Result<u64> {
        self.train.seed.ok_or_else(|| Error::Config("train.seed is required for training".into()))
    }

    /// Loads the manifest, or synthesizes the configured session.
    pub fn trials(&self) -> Result<Vec<Trial>> {
        match &self.data.manifest {
            Some(path) => load_trials(path, self.data.subject.as_deref()),
            None => synth_session(&self.data.synthetic, self.data.n_trials, self.data.n_online),
        }
    }
}
