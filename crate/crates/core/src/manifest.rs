//! Run manifests: what a command read, what it wrote, and with which seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST_FORMAT: &str = "invpulse-manifest v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: Vec<String>,
    pub config_digests: Vec<FileDigest>,
    pub seed: Option<u64>,
    pub version: String,
    pub threads: Option<usize>,
    pub wall_time_s: f64,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&std::fs::read(path)?),
    })
}

impl RunManifest {
    pub fn new(command: Vec<String>, seed: Option<u64>, threads: Option<usize>) -> Self {
        RunManifest {
            format: MANIFEST_FORMAT.into(),
            command,
            config_digests: Vec::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            threads,
            wall_time_s: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn add_config(&mut self, path: &Path) -> Result<()> {
        self.config_digests.push(digest_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(digest_file(path)?);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json() + "\n")?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.txt");
        std::fs::write(&out, "abc").unwrap();
        let mut m = RunManifest::new(vec!["x".into()], Some(3), None);
        m.add_output(&out).unwrap();
        let back: RunManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.outputs[0].sha256, sha256_hex(b"abc"));
    }
}
