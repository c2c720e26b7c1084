//! Staged outputs, atomic writes and run manifests.
//!
//! A command stages every output in memory; nothing touches the output
//! directory until the command has finished. Files are then written through
//! a temporary file in the same directory and renamed into place, the
//! manifest last. A failed run leaves `error.<command>.json` behind and no
//! manifest claiming success.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;
use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest_name(command: &str) -> String {
    format!("manifest.{command}.json")
}

pub fn error_name(command: &str) -> String {
    format!("error.{command}.json")
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Config(format!("serializing JSON: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Outputs and input digests collected by one command.
#[derive(Debug, Default)]
pub struct Staged {
    /// Relative output name -> contents, written in name order.
    pub files: BTreeMap<String, Vec<u8>>,
    /// Input path -> sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// A failure discovered after the outputs were produced; the outputs are
    /// still written (they are the diagnostics) but the run is flagged.
    pub failure: Option<CliError>,
}

impl Staged {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<()> {
        self.add(name, to_json(value)?);
        Ok(())
    }

    /// Records the digest of an input file and returns its contents.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.note_input(path, &bytes);
        Ok(bytes)
    }

    pub fn note_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.insert(path.display().to_string(), sha256_hex(bytes));
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub status: String,
    pub version: String,
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    pub overrides: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &LoadedConfig, staged: &Staged) -> Self {
        Manifest {
            command: command.to_string(),
            status: staged.failure.as_ref().map_or("ok", |f| f.kind()).to_string(),
            version: VERSION.to_string(),
            config: config.path.display().to_string(),
            config_sha256: sha256_hex(&config.source),
            seed: config.config.seed,
            overrides: config.overrides.iter().cloned().collect(),
            inputs: staged.inputs.clone(),
            outputs: staged.files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
        }
    }
}

/// Writes the staged files and the manifest under `dir`.
pub fn commit(dir: &Path, command: &str, config: &LoadedConfig, staged: &Staged) -> Result<PathBuf> {
    // A manifest from an earlier run must not vouch for a half-written set.
    remove_if_present(&dir.join(manifest_name(command)))?;
    for (name, bytes) in &staged.files {
        write_atomic(&dir.join(name), bytes)?;
    }
    let manifest_path = dir.join(manifest_name(command));
    write_atomic(&manifest_path, &to_json(&Manifest::new(command, config, staged))?)?;
    Ok(manifest_path)
}

pub fn remove_if_present(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(CliError::io(path, e)),
    }
}
