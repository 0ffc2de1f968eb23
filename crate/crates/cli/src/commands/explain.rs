use std::path::Path;

use serde_json::json;

use bwp_core::influence::{batch_influence, write_score_table};
use bwp_core::net::load_model;

use crate::artifacts::{ensure_parent_dir, read_split_cache, sha256_hex_file};
use crate::config::{scores_hash, windows_hash, RunConfig};
use crate::meta::{verify_meta, write_meta};
use crate::CliError;

pub fn run(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let upstream = windows_hash(cfg);
    let hash = scores_hash(cfg);

    let (header, params) = load_model(&cfg.paths.model)?;
    // A model is only as good as the normalization its inputs were fed
    // through; refuse to score against drifted stats.
    if let Some(stats_ref) = &header.normalization {
        let stats_path = Path::new(&stats_ref.path);
        verify_meta(stats_path, &upstream)?;
        let actual = sha256_hex_file(stats_path)?;
        if actual != stats_ref.sha256 {
            return Err(CliError::Lineage(format!(
                "normalization stats {} hash to {actual} but the model was trained against {}; \
                 regenerate the windows and retrain, or point at the original stats",
                stats_ref.path, stats_ref.sha256
            )));
        }
    } else {
        log::warn!("model records no normalization reference; scoring raw tensors");
    }

    let windows = read_split_cache(&cfg.paths.windows, cfg.explain.split, &upstream)?;
    if windows.is_empty() {
        return Err(CliError::Config(format!(
            "the {} split has no windows to score",
            cfg.explain.split.suffix()
        )));
    }

    let (scores, failures) = batch_influence(&header.architecture, &params, &windows, cfg.explain.target);
    for f in &failures {
        log::warn!("window {} skipped: {}", f.window_id, f.error);
    }
    if scores.is_empty() {
        let first = failures.first().map(|f| f.error.clone()).unwrap_or_default();
        return Err(CliError::Config(format!(
            "all {} windows failed to score; first error: {first}",
            failures.len()
        )));
    }

    ensure_parent_dir(&cfg.paths.scores)?;
    write_score_table(&cfg.paths.scores, &scores)?;
    write_meta(&cfg.paths.scores, "explain", &hash)?;

    Ok(json!({
        "command": "explain",
        "scores": cfg.paths.scores.display().to_string(),
        "split": cfg.explain.split.suffix(),
        "windows_scored": windows.len() - failures.len(),
        "windows_failed": failures.len(),
        "rows": scores.len(),
        "config_hash": hash,
    }))
}
