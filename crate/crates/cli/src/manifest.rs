use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sparse_demand::mcmc::{Block, BlockCounters};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance of one run. Everything except `wall_clock_seconds` is a
/// function of the inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub config_sha256: String,
    pub data_sha256: String,
    pub wall_clock_seconds: f64,
    /// Retained-draw acceptance rate per Metropolis block.
    pub acceptance: BTreeMap<String, f64>,
    pub burn_in_acceptance: BTreeMap<String, f64>,
    /// SHA-256 of every output file, by path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn acceptance_rates(c: &BlockCounters) -> BTreeMap<String, f64> {
    Block::METROPOLIS
        .iter()
        .map(|&b| (b.name().to_string(), c.get(b).rate()))
        .collect()
}

impl RunManifest {
    pub fn hash_outputs(&mut self, dir: &Path, files: &[String]) -> Result<()> {
        for f in files {
            self.outputs.insert(f.clone(), file_sha256(&dir.join(f))?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::json(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::json(&path, e))
    }
}
