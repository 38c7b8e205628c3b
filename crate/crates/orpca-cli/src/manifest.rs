//! Run manifests. A manifest records everything needed to reproduce a run
//! and nothing that changes between identical runs, so two runs with the
//! same inputs produce byte-identical manifests. Wall time is written to a
//! separate `timing.json`.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{write_atomic, CliError, CliResult};

/// Digest of one input file.
#[derive(Serialize, Debug, Clone, PartialEq, Eq)]
pub struct InputDigest {
    /// Path as given on the command line.
    pub path: String,
    /// Lowercase hex SHA-256 of the file contents.
    pub sha256: String,
}

/// Reproducibility record written next to every output set.
#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct RunManifest {
    /// Subcommand name.
    pub command: String,
    /// Version of the tool.
    pub version: String,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    /// Seeds used, in processing order.
    pub seeds: Vec<u64>,
    /// Input files in processing order.
    pub inputs: Vec<InputDigest>,
    /// Output files relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records an input file by its contents.
    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Writes `manifest.json` and `timing.json` into `dir`.
    pub fn write(&self, dir: &Path, wall_seconds: f64) -> CliResult<()> {
        let body = serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        write_atomic(&dir.join("manifest.json"), format!("{body}\n").as_bytes())?;
        let timing = serde_json::json!({ "wall_seconds": wall_seconds });
        write_atomic(&dir.join("timing.json"), format!("{timing}\n").as_bytes())
    }
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
