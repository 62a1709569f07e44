use std::fs;
use std::path::{Path, PathBuf};

use enmo_core::io::{EnmoConfig, OmsConfig};
use enmo_core::spectra::Band;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// A parameter block given inline or as a path relative to the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

/// Run configuration shared by `simulate`, `project` and `tomo`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub enmo: Option<Source<EnmoConfig>>,
    pub oms: Option<Source<OmsConfig>>,
    pub band: Option<Band>,
    /// Detection angles; falls back to the ENMO file's `psi_rad`.
    #[serde(default)]
    pub psi_rad: Vec<f64>,
}

/// Every input file read by a command, hashed in reading order.
#[derive(Default)]
pub struct Inputs {
    hasher: Sha256,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        self.hasher
            .update(path.file_name().map(|n| n.as_encoded_bytes()).unwrap_or_default());
        self.hasher.update([0]);
        self.hasher.update(text.as_bytes());
        self.hasher.update([0]);
        Ok(text)
    }

    pub fn json<T: DeserializeOwned>(&mut self, path: &Path) -> Result<T, CliError> {
        let text = self.read(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn resolve<T: DeserializeOwned>(&mut self, source: Source<T>, base: &Path) -> Result<T, CliError> {
        match source {
            Source::Inline(v) => Ok(v),
            Source::Path(p) => self.json(&base.join(p)),
        }
    }

    /// Mixes a non-file input (a CLI value) into the hash.
    pub fn note(&mut self, key: &str, value: &str) {
        self.hasher.update(key.as_bytes());
        self.hasher.update(b"=");
        self.hasher.update(value.as_bytes());
        self.hasher.update([0]);
    }

    pub fn digest(&self) -> String {
        self.hasher
            .clone()
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub struct Loaded {
    pub enmo: Option<EnmoConfig>,
    pub oms: Option<OmsConfig>,
    pub band: Option<Band>,
    pub psi_rad: Vec<f64>,
}

pub fn load_run_config(path: &Path, inputs: &mut Inputs) -> Result<Loaded, CliError> {
    let cfg: RunConfig = inputs.json(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let enmo = cfg.enmo.map(|s| inputs.resolve(s, base)).transpose()?;
    let oms = cfg.oms.map(|s| inputs.resolve(s, base)).transpose()?;
    if let Some(band) = &cfg.band {
        band.validate()?;
    }
    Ok(Loaded {
        enmo,
        oms,
        band: cfg.band,
        psi_rad: cfg.psi_rad,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub variant: &'static str,
    pub cross_term: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Provenance {
    /// `#` comment lines (without the `#`) for CSV headers.
    pub fn comments(&self) -> Vec<String> {
        let mut out = vec![
            format!(" {} {}", self.tool, self.version),
            format!(" command: {}", self.command),
            format!(" config_sha256: {}", self.config_sha256),
            format!(" variant: {}", self.variant),
            format!(" cross_term: {}", self.cross_term),
        ];
        if let Some(seed) = self.seed {
            out.push(format!(" seed: {seed}"));
        }
        out
    }

    pub fn to_map(&self) -> std::collections::BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self).expect("serializable") {
            serde_json::Value::Object(m) => m.into_iter().collect(),
            _ => unreachable!(),
        }
    }
}
