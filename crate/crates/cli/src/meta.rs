//! Provenance sidecars: `<artifact>.meta.json` records which command
//! produced a file and the lineage hash of its effective config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub command: String,
    pub config_hash: String,
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

pub fn write_meta(artifact: &Path, command: &str, config_hash: &str) -> Result<(), CliError> {
    let meta = ArtifactMeta { command: command.into(), config_hash: config_hash.into() };
    fs::write(meta_path(artifact), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

/// Checks an input artifact's recorded lineage against the hash the
/// current config expects. A missing sidecar is tolerated with a
/// warning (externally produced inputs have none); a present sidecar
/// that disagrees is fatal, with both hashes printed.
pub fn verify_meta(artifact: &Path, expected_hash: &str) -> Result<(), CliError> {
    let side = meta_path(artifact);
    if !side.exists() {
        log::warn!("{}: no provenance sidecar, skipping lineage check", artifact.display());
        return Ok(());
    }
    let meta: ArtifactMeta = serde_json::from_slice(&fs::read(&side)?)
        .map_err(|e| CliError::Lineage(format!("{}: unreadable sidecar: {e}", side.display())))?;
    if meta.config_hash != expected_hash {
        return Err(CliError::Lineage(format!(
            "{}: produced by `{}` under config hash {}, but the current config hashes to {}; \
             regenerate the artifact or align the config",
            artifact.display(),
            meta.command,
            meta.config_hash,
            expected_hash
        )));
    }
    Ok(())
}
