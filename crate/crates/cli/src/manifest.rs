use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use factlens_core::seed::sha256_hex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{CliError, Result};

/// Written next to every run's outputs. Holds nothing time-dependent, so an
/// identical rerun produces an identical manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub sub_seeds: BTreeMap<String, u64>,
    pub config: Value,
    /// Path as given on the command line → SHA-256 of its content.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, config: impl Serialize) -> Result<Self> {
        Ok(RunManifest {
            tool: "factlens".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            seed,
            sub_seeds: BTreeMap::new(),
            config: serde_json::to_value(config)?,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn sub_seed(&mut self, name: &str, value: u64) -> u64 {
        self.sub_seeds.insert(name.into(), value);
        value
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), hash_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), hash_file(path)?);
        Ok(())
    }

    /// Write `<dir>/<subcommand>.manifest.json` and return its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.manifest.json", self.subcommand));
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        write_file(&path, json.as_bytes())?;
        Ok(path)
    }
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
