//! Run manifests: every artifact-producing command records what produced
//! its outputs, so identical inputs can be recognized and reruns compared.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Input path -> SHA-256 of the file (directories digest their
    /// manifest.json).
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        Self {
            command: command.to_string(),
            config,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        let digest_path =
            if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
        let digest = if digest_path.exists() {
            sha256_file(&digest_path)?
        } else {
            "absent".to_string()
        };
        self.inputs.push((path.display().to_string(), digest));
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write `run_manifest.json` under `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("run_manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(self).expect("serializable"))?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.bin");
        std::fs::write(&input, b"hello").unwrap();
        let mut m = RunManifest::new("test", serde_json::json!({"k": 1}), vec![7]);
        m.add_input(&input).unwrap();
        m.add_output(&dir.path().join("out.bin"));
        let path = m.write(dir.path()).unwrap();
        let loaded: serde_json::Value =
            serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
        assert_eq!(loaded["command"], "test");
        assert_eq!(loaded["seeds"][0], 7);
        // digest of b"hello"
        assert_eq!(
            loaded["inputs"][0][1],
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
    }
}
