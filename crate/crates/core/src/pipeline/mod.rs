//! Config-driven orchestration: the membership experiment, the toy
//! regression demonstration and the theory self-check.

mod config;
mod demo;
mod experiment;
mod verify;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use config::{
    AttackConfig, AttackKind, BmiaConfig, DatasetConfig, ExperimentConfig, LaplaceConfig,
    ModelConfig, PriorConfig, QmiaConfig, ReferenceConfig, ReportConfig, SplitConfig,
};
pub use demo::{
    fit_toy_regression_demo, run_toy_regression_demo, DemoConfig, DemoResult, IntervalRow,
    DEMO_NOISE_VAR,
};
pub use experiment::{
    load_dataset, read_train_metrics, run_experiment, run_stage, Stage, TrainMetrics, METRICS_FILE,
};
pub use verify::{format_theory_table, verify_theory, verify_theory_with, TheoryCheck, TheoryHooks};

/// Writes `bytes` to a temporary sibling and renames it over `path`, so
/// readers never see a half-written file. Parent directories are created.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("no file name in {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if name != MANIFEST_NAME && !name.starts_with('.') {
                out.push(p);
            }
        }
    }
    Ok(())
}

/// Hashes every file under `dir` (except the manifest) and writes
/// `manifest.json` with paths relative to `dir`, sorted.
pub fn write_manifest(dir: &Path) -> Result<Manifest> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    let mut entries = Vec::with_capacity(files.len());
    for p in files {
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let rel = p.strip_prefix(dir).unwrap_or(&p);
        entries.push(ManifestEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest { files: entries };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&dir.join(MANIFEST_NAME), text.as_bytes())?;
    Ok(manifest)
}

/// Files written by one stage, renamed with a `.partial` suffix if the
/// stage fails.
#[derive(Debug, Default)]
pub(crate) struct StageFiles {
    written: Vec<PathBuf>,
}

impl StageFiles {
    pub(crate) fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    pub(crate) fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        write_atomic(&path, bytes)?;
        self.record(path);
        Ok(())
    }

    pub(crate) fn mark_partial(&self) {
        for p in &self.written {
            let mut name = p.as_os_str().to_owned();
            name.push(".partial");
            let _ = std::fs::rename(p, PathBuf::from(name));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("a/b.txt"), b"hello").unwrap();
        write_atomic(&dir.path().join("c.txt"), b"").unwrap();
        let m = write_manifest(dir.path()).unwrap();
        let names: Vec<&str> = m.files.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(names, vec!["a/b.txt", "c.txt"]);
        assert_eq!(
            m.files[0].sha256,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        let again = write_manifest(dir.path()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn partial_marking() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = StageFiles::default();
        s.write(dir.path().join("x.csv"), b"1").unwrap();
        s.mark_partial();
        assert!(dir.path().join("x.csv.partial").exists());
        assert!(!dir.path().join("x.csv").exists());
    }
}
