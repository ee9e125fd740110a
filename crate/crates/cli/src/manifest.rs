use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use imbalance_core::ThreadCap;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Machine {
    pub thread_cap: usize,
    pub cores: usize,
}

/// What produced a set of artifacts, so reruns can be compared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// SHA-256 of every input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub version: String,
    pub timestamp: String,
    pub machine: Machine,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, inputs: &[(PathBuf, Vec<u8>)]) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().collect(),
            inputs: inputs
                .iter()
                .map(|(p, bytes)| (p.display().to_string(), sha256_hex(bytes)))
                .collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            machine: Machine {
                thread_cap: ThreadCap::from_env().get(),
                cores: ThreadCap::hardware().get(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }
}

/// Output directory holding one manifest that every artifact points to.
pub struct ArtifactDir {
    dir: PathBuf,
    manifest_sha: String,
    written: Vec<PathBuf>,
}

impl ArtifactDir {
    pub fn create(dir: &Path, manifest: &RunManifest) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let json = manifest.to_json();
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, &json).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(Self { dir: dir.to_path_buf(), manifest_sha: sha256_hex(json.as_bytes()), written: vec![path] })
    }

    /// Comment line for text artifacts.
    pub fn reference(&self) -> String {
        format!("manifest={MANIFEST_FILE} sha256={}", self.manifest_sha)
    }

    pub fn manifest_sha(&self) -> &str {
        &self.manifest_sha
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}
