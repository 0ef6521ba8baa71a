//! Artifact manifests: every file a run produces, with its SHA-256.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{read_json, write_json};
use crate::error::{OpeError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed { kind: String, message: String, exit_code: i32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "complete")]
    pub status: RunStatus,
    #[serde(default)]
    pub files: Vec<ArtifactEntry>,
}

fn complete() -> RunStatus {
    RunStatus::Complete
}

impl Manifest {
    pub fn empty() -> Self {
        Self { scenario: None, seeds: Vec::new(), status: RunStatus::Complete, files: Vec::new() }
    }

    pub fn find(&self, name: &str) -> Option<&ArtifactEntry> {
        self.files.iter().find(|f| f.path == name)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes artifacts under one directory and records each in the manifest.
pub struct ArtifactWriter {
    root: PathBuf,
    manifest: Manifest,
}

impl ArtifactWriter {
    pub fn create(root: &Path, scenario: Option<String>, seeds: Vec<u64>) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| OpeError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), manifest: Manifest { scenario, seeds, status: RunStatus::Complete, files: Vec::new() } })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Hashes a file already written under the root.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        let bytes = fs::read(&path).map_err(|e| OpeError::io(&path, e))?;
        let entry = ArtifactEntry { path: name.to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 };
        match self.manifest.files.iter_mut().find(|f| f.path == name) {
            Some(f) => *f = entry,
            None => self.manifest.files.push(entry),
        }
        Ok(())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| OpeError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| OpeError::io(&path, e))?;
        self.record(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        write_json(&path, value)?;
        self.record(name)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        self.write_bytes(name, &csv_bytes(header, rows))
    }

    /// Writes the manifest with `status`; returns it.
    pub fn finish(mut self, status: RunStatus) -> Result<Manifest> {
        self.manifest.status = status;
        write_json(&self.root.join(MANIFEST_FILE), &self.manifest)?;
        Ok(self.manifest)
    }
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Loads a manifest and checks every listed file against its hash.
pub fn verify(manifest_path: &Path) -> Result<Manifest> {
    if !manifest_path.exists() {
        return Err(OpeError::MissingArtifact(manifest_path.to_path_buf()));
    }
    let manifest: Manifest = read_json(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    for f in &manifest.files {
        let path = root.join(&f.path);
        let bytes = fs::read(&path).map_err(|_| OpeError::MissingArtifact(path.clone()))?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(OpeError::Integrity { path });
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn tampering_and_deletion_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::create(dir.path(), Some("test".into()), vec![1]).unwrap();
        w.write_csv("a.csv", &["metric", "value"], &[vec!["cost".into(), "1".into()]]).unwrap();
        w.write_json("b.json", &[1, 2, 3]).unwrap();
        w.finish(RunStatus::Complete).unwrap();
        let m = dir.path().join(MANIFEST_FILE);
        assert_eq!(verify(&m).unwrap().files.len(), 2);
        fs::write(dir.path().join("a.csv"), "metric,value\ncost,2\n").unwrap();
        assert!(matches!(verify(&m), Err(OpeError::Integrity { .. })));
        fs::remove_file(dir.path().join("a.csv")).unwrap();
        assert!(matches!(verify(&m), Err(OpeError::MissingArtifact(_))));
    }
}
