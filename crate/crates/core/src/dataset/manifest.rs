//! Dataset manifests: a TOML document listing one `AADT` file per trial.
//!
//! ```toml
//! fs = 256.0
//! channels = ["C3", "C4"]
//!
//! [[trial]]
//! path = "trial_000.aadt"
//! label = "F"
//! subject = "S01"
//! session = "calibration"
//! ```
//!
//! Each trial file holds the stacked `(C + 2) x T` input matrix (female
//! envelope, EEG rows, male envelope).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor::{read_tensor, write_tensor, Tensor};
use super::{build_input, unstack_input, Label, SessionKind, Trial, EEG_FS};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub path: String,
    pub label: Label,
    pub subject: String,
    pub session: SessionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub fs: f64,
    pub channels: Vec<String>,
    #[serde(rename = "trial", default)]
    pub trials: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Writes every trial plus `manifest.toml` into `dir` and returns the
/// manifest path. All trials must share one montage.
pub fn save_trials(dir: impl AsRef<Path>, trials: &[Trial]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let channels = trials.first().map(|t| t.channel_names.clone()).unwrap_or_default();
    if trials.iter().any(|t| t.channel_names != channels) {
        return Err(Error::Data("trials in one manifest must share channel names".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(trials.len());
    for (i, trial) in trials.iter().enumerate() {
        let name = format!("trial_{i:03}.aadt");
        write_tensor(dir.join(&name), &Tensor::from_array2(&build_input(trial)?))?;
        records.push(ManifestRecord {
            path: name,
            label: trial.label,
            subject: trial.subject_id.clone(),
            session: trial.session,
        });
    }
    let manifest = Manifest { fs: EEG_FS, channels, trials: records };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Loads the trials listed in a manifest, optionally keeping one subject.
/// Relative trial paths resolve against the manifest's directory.
pub fn load_trials(manifest_path: impl AsRef<Path>, subject: Option<&str>) -> Result<Vec<Trial>> {
    let manifest_path = manifest_path.as_ref();
    let manifest = Manifest::load(manifest_path)?;
    if manifest.fs != EEG_FS {
        return Err(Error::Data(format!("manifest rate {} Hz, expected {EEG_FS} Hz", manifest.fs)));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .trials
        .iter()
        .filter(|r| subject.is_none_or(|s| r.subject == s))
        .map(|r| {
            let tensor = read_tensor(base.join(&r.path))?;
            let input = tensor.to_array2()?;
            if input.nrows() != manifest.channels.len() + 2 {
                return Err(Error::shape(format!(
                    "{}: {} rows, manifest lists {} channels",
                    r.path,
                    input.nrows(),
                    manifest.channels.len()
                )));
            }
            let (env_f, eeg, env_m) = unstack_input(input.view())?;
            Trial::new(eeg, env_f, env_m, r.label, manifest.channels.clone(), r.subject.clone(), r.session)
        })
        .collect()
}
