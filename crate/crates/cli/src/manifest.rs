//! Run directories and their manifests.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! reader never observes a partially written output. The manifest is written
//! last and lists every other file with its SHA-256.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the run directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub threads: usize,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: i32,
    pub files: Vec<FileEntry>,
}

pub fn now_rfc3339() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).unwrap_or_else(|_| String::from("unknown"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// An output directory that records what has been written into it.
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    files: Vec<FileEntry>,
}

impl RunDir {
    pub fn create(path: PathBuf) -> std::io::Result<Self> {
        fs::create_dir_all(&path)?;
        // a previous run with the same config may have ended differently
        for stale in ["error.json", MANIFEST_FILE] {
            let p = path.join(stale);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
        Ok(Self { path, files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        write_atomic(&self.path.join(name), bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// Write the manifest; consumes the directory since nothing may follow it.
    pub fn finish(self, mut manifest: RunManifest) -> std::io::Result<PathBuf> {
        manifest.files = self.files;
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
        bytes.push(b'\n');
        let p = self.path.join(MANIFEST_FILE);
        write_atomic(&p, &bytes)?;
        Ok(p)
    }
}

/// Recompute the hashes listed in a manifest; returns the mismatching paths.
pub fn verify(run_dir: &Path) -> std::io::Result<Vec<String>> {
    let text = fs::read_to_string(run_dir.join(MANIFEST_FILE))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(std::io::Error::other)?;
    let mut bad = Vec::new();
    for f in &m.files {
        let ok = fs::read(run_dir.join(&f.path)).map(|b| sha256_hex(&b) == f.sha256).unwrap_or(false);
        if !ok {
            bad.push(f.path.clone());
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hashes_match_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path().join("r")).unwrap();
        run.write("a.txt", b"alpha").unwrap();
        run.write("b.txt", b"beta").unwrap();
        run.write("a.txt", b"alpha2").unwrap();
        let m = RunManifest {
            artifact: "t".into(),
            version: "0".into(),
            command: "solve".into(),
            config_hash: "h".into(),
            config: serde_json::json!({}),
            threads: 1,
            started_at: now_rfc3339(),
            finished_at: now_rfc3339(),
            exit_code: 0,
            files: vec![],
        };
        run.finish(m).unwrap();
        let root = dir.path().join("r");
        assert!(verify(&root).unwrap().is_empty());
        fs::write(root.join("b.txt"), b"tampered").unwrap();
        assert_eq!(verify(&root).unwrap(), vec!["b.txt".to_string()]);
        let names: Vec<_> = fs::read_dir(&root).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert!(names.iter().all(|n| !n.to_string_lossy().contains(".tmp-")));
    }
}
