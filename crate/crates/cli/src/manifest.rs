//! `manifest.json`: written before any result so that an interrupted run
//! still records what was asked for, then rewritten with output digests.

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub library_version: String,
    pub task: String,
    pub seed: u64,
    pub workers: usize,
    /// `running` until the task returns, then `complete` or `error`.
    pub status: String,
    /// Digest over the config and every input file, in that order.
    pub inputs_sha256: String,
    pub inputs: Vec<InputDigest>,
    pub config: serde_json::Value,
    pub verdict: Option<String>,
    pub error: Option<String>,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-file digests and the combined digest of their concatenated hashes.
pub fn digest_inputs(files: &[(String, Vec<u8>)]) -> (String, Vec<InputDigest>) {
    let mut all = Sha256::new();
    let digests = files
        .iter()
        .map(|(path, bytes)| {
            let h = sha256_hex(bytes);
            all.update(h.as_bytes());
            InputDigest { path: path.clone(), sha256: h }
        })
        .collect();
    let combined = all.finalize().iter().map(|b| format!("{b:02x}")).collect();
    (combined, digests)
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join("manifest.json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::rename(tmp, dir.join("manifest.json"))?;
        Ok(())
    }

    /// Records the digest of every output, named relative to `dir`.
    pub fn add_outputs(&mut self, dir: &Path, files: &[PathBuf]) -> Result<()> {
        for f in files {
            let bytes = std::fs::read(f)?;
            let name = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().into_owned();
            self.outputs.push(OutputDigest {
                file: name,
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(())
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
    fn combined_digest_depends_on_every_input() {
        let a = digest_inputs(&[("c".into(), b"x".to_vec())]).0;
        let b = digest_inputs(&[("c".into(), b"x".to_vec()), ("r".into(), b"y".to_vec())]).0;
        assert_ne!(a, b);
    }
}
