//! Run manifests: what was run, on which inputs, and digests of every file
//! written. Manifests carry no timestamps so identical runs produce
//! identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub inputs: Vec<FileDigest>,
    pub config: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects outputs for one command and writes them under `out_dir`.
#[derive(Debug)]
pub struct OutputSink {
    out_dir: PathBuf,
    manifest: RunManifest,
}

impl OutputSink {
    pub fn new(out_dir: impl Into<PathBuf>, command: &str) -> Self {
        Self {
            out_dir: out_dir.into(),
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                inputs: Vec::new(),
                config: BTreeMap::new(),
                master_seed: None,
                outputs: Vec::new(),
            },
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.manifest.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn record_config(&mut self, key: &str, value: impl ToString) {
        self.manifest
            .config
            .insert(key.to_string(), value.to_string());
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.manifest.master_seed = Some(seed);
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        fs::write(&path, contents)?;
        self.manifest.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<String> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)?;
        Ok(text)
    }

    pub fn finish(self) -> Result<RunManifest> {
        fs::create_dir_all(&self.out_dir)?;
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(self.out_dir.join(MANIFEST_FILE), text)?;
        Ok(self.manifest)
    }
}
