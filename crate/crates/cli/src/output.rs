use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use stockcast_core::modelstore::write_atomic;

use crate::{data_err, CliError};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

/// Output directory that records a checksum for everything written into it.
pub struct OutDir {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| data_err(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        write_atomic(&path, bytes).map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))?;
        self.record(name, bytes);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(data_err)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Records a file written by someone else (e.g. the model store).
    pub fn adopt(&mut self, name: &str) -> Result<(), CliError> {
        let bytes = fs::read(self.path(name)).map_err(data_err)?;
        self.record(name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.artifacts.retain(|a| a.file != name);
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Writes `manifest.json` listing every artifact so far.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<(), CliError> {
        manifest.outputs = self.artifacts.clone();
        self.write_json("manifest.json", &manifest)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub tool_version: &'static str,
    /// Argument list that reproduces the run, all defaults materialized.
    pub replay: Vec<String>,
    pub symbol: String,
    pub seeds: serde_json::Value,
    pub config: serde_json::Value,
    pub input: InputDigest,
    pub outputs: Vec<Artifact>,
}
