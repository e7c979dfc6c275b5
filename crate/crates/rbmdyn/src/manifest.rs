//! `manifest.json`: configuration snapshot, seeds and checksums of every
//! file a command produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, ExperimentConfig};
use crate::error::{AppError, Result};
use crate::formats::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Stage name to the seed it drew from.
    pub seeds: BTreeMap<String, u64>,
    /// Stage name to the cache key of the model it used.
    pub stage_keys: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            config_hash: config.experiment_hash(),
            config: config.clone(),
            seeds: BTreeMap::new(),
            stage_keys: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    /// Lists every file under `dir` except the manifest itself, sorted by path.
    pub fn record_files(&mut self, dir: &Path) -> Result<()> {
        let mut files = Vec::new();
        collect(dir, dir, &mut files)?;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files = files;
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(self).expect("manifest serializes");
        text.push(b'\n');
        write_atomic(&dir.join(MANIFEST_FILE), &text)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read(&path).map_err(|e| AppError::io(&path, e))?;
        serde_json::from_slice(&text).map_err(|e| AppError::data(format!("{}: {e}", path.display())))
    }

    /// Paths whose checksum no longer matches, or which are missing.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.files {
            match fs::read(dir.join(&f.path)) {
                Ok(bytes) if sha256_hex(&bytes) == f.sha256 => {}
                _ => bad.push(f.path.clone()),
            }
        }
        Ok(bad)
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| AppError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| AppError::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect(root, &path, out)?;
            continue;
        }
        let rel = relative(root, &path);
        if rel == MANIFEST_FILE {
            continue;
        }
        let bytes = fs::read(&path).map_err(|e| AppError::io(&path, e))?;
        out.push(FileEntry {
            path: rel,
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    Ok(())
}

fn relative(root: &Path, path: &Path) -> String {
    let rel: PathBuf = path.strip_prefix(root).unwrap_or(path).to_path_buf();
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_and_verifies_checksums() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("b.txt"), "b").unwrap();
        fs::write(dir.path().join("sub/a.txt"), "abc").unwrap();
        let mut m = RunManifest::new("test", &ExperimentConfig::default());
        m.seeds.insert("train_rbm".into(), 5);
        m.record_files(dir.path()).unwrap();
        m.write(dir.path()).unwrap();

        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        let paths: Vec<&str> = back.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["b.txt", "sub/a.txt"]);
        assert_eq!(back.files[1].sha256, sha256_hex(b"abc"));
        assert!(back.verify(dir.path()).unwrap().is_empty());

        fs::write(dir.path().join("sub/a.txt"), "abd").unwrap();
        assert_eq!(back.verify(dir.path()).unwrap(), vec!["sub/a.txt".to_string()]);
    }
}
