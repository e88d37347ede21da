use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{CliError, Command};

/// Output file name and contents.
pub type OutputFile = (String, Vec<u8>);

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    /// SHA-256 of each output file.
    files: BTreeMap<&'a str, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes every output plus `manifest.json`. Feeding the manifest back via
/// `--config` reproduces the same files.
pub fn write(dir: &Path, command: Command, cfg: &RunConfig, seed: u64, files: &[OutputFile]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut hashes = BTreeMap::new();
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
        hashes.insert(name.as_str(), sha256_hex(bytes));
    }
    let manifest = Manifest {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config: cfg,
        files: hashes,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}
