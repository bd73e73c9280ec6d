//! `manifest.json`: config hash, seeds and content hashes of every artifact
//! a stage read or wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, PipelineConfig, StageSeeds};
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub seeds: StageSeeds,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    fn fresh(cfg: &PipelineConfig) -> Self {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: cfg.hash(),
            seeds: cfg.seeds(),
            stages: BTreeMap::new(),
        }
    }

    pub fn read(out: &Path) -> Result<Option<Self>, CliError> {
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// Files under `path` (or `path` itself), sorted.
fn files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(path)? {
        let p = entry?.path();
        if p.is_dir() {
            found.extend(files(&p)?);
        } else {
            found.push(p);
        }
    }
    found.sort();
    Ok(found)
}

/// Hashes keyed by path relative to `out`; files elsewhere are keyed by
/// their path relative to the given root's parent.
fn hash_all(out: &Path, roots: &[PathBuf]) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for root in roots {
        let base = if root.starts_with(out) {
            out.to_path_buf()
        } else {
            root.parent().map(Path::to_path_buf).unwrap_or_default()
        };
        for f in files(root)? {
            if f.file_name().is_some_and(|n| n == MANIFEST_FILE) {
                continue;
            }
            let key = f.strip_prefix(&base).unwrap_or(&f).to_string_lossy().replace('\\', "/");
            map.insert(key, sha256_hex(&std::fs::read(&f)?));
        }
    }
    Ok(map)
}

/// Adds or replaces one stage's record. A manifest written under a
/// different config is started afresh.
pub fn record_stage(
    out: &Path,
    cfg: &PipelineConfig,
    stage: &str,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<(), CliError> {
    let mut m = match Manifest::read(out)? {
        Some(m) if m.config_sha256 == cfg.hash() => m,
        _ => Manifest::fresh(cfg),
    };
    m.stages.insert(
        stage.to_string(),
        StageRecord {
            inputs: hash_all(out, inputs)?,
            outputs: hash_all(out, outputs)?,
        },
    );
    std::fs::write(
        out.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n",
    )?;
    Ok(())
}
