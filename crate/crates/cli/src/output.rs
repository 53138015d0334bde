//! Deterministic artifact emission: CSV with 9 significant digits, '.'
//! decimal separator and LF line endings, plus the run manifest.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

/// One number, 9 significant digits, locale independent.
pub fn fmt(value: f64) -> String {
    format!("{value:.8e}")
}

pub fn write_csv(
    dir: &Path,
    name: &str,
    header: &str,
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<PathBuf, CliError> {
    let mut text = String::new();
    text.push_str(header);
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::runtime(format!("write {name}: {e}")))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("serialize {name}: {e}")))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::runtime(format!("write {name}: {e}")))?;
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    pub files: Vec<String>,
}

pub fn config_hash(config_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    format!("{:x}", hasher.finalize())
}

pub fn write_manifest(
    dir: &Path,
    config_text: &str,
    command: &str,
    seed: Option<u64>,
    wall_time_s: f64,
    files: &[PathBuf],
) -> Result<PathBuf, CliError> {
    let manifest = RunManifest {
        config_sha256: config_hash(config_text),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed,
        wall_time_s,
        files: files
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect(),
    };
    write_json(dir, "run_manifest.json", &manifest)
}
