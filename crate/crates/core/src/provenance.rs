//! Artifact headers and atomic file output.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const TOOL: &str = "forge";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
#[error("{path}: {source}")]
pub struct IoError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

impl IoError {
    pub fn new(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self {
            path: path.into(),
            source,
        }
    }
}

/// Header carried by every artifact so it can be traced back to the run
/// that produced it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new<T: Serialize + ?Sized>(seed: u64, config: &T) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            seed,
            config_hash: config_hash(config),
        }
    }

    /// Whether this build can re-load the artifact.
    pub fn is_compatible(&self) -> bool {
        self.tool == TOOL && self.version == VERSION
    }
}

/// SHA-256 of the canonical JSON form of `config`, hex encoded.
pub fn config_hash<T: Serialize + ?Sized>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::new(dir, e))?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| IoError::new(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| IoError::new(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::new(path, e))
}
