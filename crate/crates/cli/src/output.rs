//! Run-directory plumbing: atomic file writes and manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(format!("creating {}", parent.display()), e))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, contents).map_err(|e| CliError::io(format!("writing {}", tmp.display()), e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(format!("renaming into {}", path.display()), e))
}

/// A CSV assembled from a header and already formatted rows.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Self { text: format!("{header}\n") }
    }

    pub fn row(&mut self, fields: &[&dyn std::fmt::Display]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            let _ = write!(self.text, "{f}");
        }
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, self.text.as_bytes())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: String,
    seeds: &'a [u64],
    files: &'a [String],
}

pub fn config_hash(cfg: &ExperimentConfig) -> CliResult<String> {
    Ok(hex::encode(Sha256::digest(cfg.to_toml()?.as_bytes())))
}

/// Resolved `config.toml` plus `manifest.json` for a run directory.
pub fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, seeds: &[u64], files: &[PathBuf]) -> CliResult<()> {
    let files: Vec<String> = files
        .iter()
        .map(|f| f.strip_prefix(dir).unwrap_or(f).to_string_lossy().replace('\\', "/"))
        .collect();
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: config_hash(cfg)?,
        seeds,
        files: &files,
    };
    write_atomic(&dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))? + "\n";
    write_atomic(&dir.join("manifest.json"), json.as_bytes())
}

/// File-name friendly form of an averager label (`ema:0.8` → `ema-0.8`).
pub fn file_label(label: &str) -> String {
    label.replace(':', "-")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("a.csv");
        write_atomic(&path, b"x\n").unwrap();
        write_atomic(&path, b"y\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "y\n");
        let names: Vec<_> = std::fs::read_dir(path.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn csv_rows() {
        let mut c = Csv::new("a,b");
        c.row(&[&1, &0.5]);
        c.row(&[&"x", &f64::INFINITY]);
        assert_eq!(c.text, "a,b\n1,0.5\nx,inf\n");
    }
}
