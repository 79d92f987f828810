//! Run manifest: what was run, on what, and digests of everything written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub version: String,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub iterations: Option<usize>,
    pub exit_code: i32,
    pub metrics: BTreeMap<String, f64>,
    /// Path relative to `output_dir` -> lowercase hex SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(64);
    for b in Sha256::digest(bytes).iter() {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// Digest every file under `dir` except the manifest itself.
pub fn hash_outputs(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap_or(&path);
            let name = rel.to_string_lossy().replace('\\', "/");
            if name == FILE_NAME || name.ends_with(".tmp") {
                continue;
            }
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            out.insert(name, sha256_hex(&bytes));
        }
    }
    Ok(out)
}

impl RunManifest {
    /// Write to a temporary file, then rename over `manifest.json`.
    pub fn write_atomic(&self) -> Result<()> {
        let target = self.output_dir.join(FILE_NAME);
        let tmp = self.output_dir.join(format!("{FILE_NAME}.tmp"));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &target).with_context(|| format!("renaming to {}", target.display()))?;
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
    fn hashes_nested_files_and_skips_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("a.txt"), "a").unwrap();
        fs::write(dir.path().join("sub/b.txt"), "b").unwrap();
        fs::write(dir.path().join(FILE_NAME), "{}").unwrap();
        let h = hash_outputs(dir.path()).unwrap();
        assert_eq!(h.keys().collect::<Vec<_>>(), ["a.txt", "sub/b.txt"]);
    }
}
