use std::fs::File;
use std::io::{BufWriter, Write};

use serde_json::json;

use bwp_core::market::channel_names;
use bwp_core::net::{save_model, train, ModelHeader, StatsRef, TrainHistory};

use crate::artifacts::{ensure_parent_dir, read_split_cache, sha256_hex_file};
use crate::config::{train_hash, windows_hash, RunConfig, SplitName};
use crate::meta::{verify_meta, write_meta};
use crate::CliError;

/// Best validation accuracy over a history, when any epoch had one.
pub fn best_val_acc(history: &TrainHistory) -> Option<f64> {
    history
        .best_epoch
        .and_then(|i| history.epochs.get(i))
        .and_then(|e| e.val_acc)
}

pub fn write_history_csv(path: &std::path::Path, history: &TrainHistory) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,train_loss,train_acc,val_loss,val_acc")?;
    for e in &history.epochs {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            e.epoch,
            e.train_loss,
            e.train_acc,
            cell(e.val_loss),
            cell(e.val_acc)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Hashes the stats file and checks its lineage, returning the
/// reference a model header should carry.
pub fn stats_reference(cfg: &RunConfig, expected: &str) -> Result<StatsRef, CliError> {
    verify_meta(&cfg.paths.stats, expected)?;
    Ok(StatsRef {
        path: cfg.paths.stats.display().to_string(),
        sha256: sha256_hex_file(&cfg.paths.stats)?,
    })
}

pub fn run(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let upstream = windows_hash(cfg);
    let hash = train_hash(cfg);
    // Fail on an impossible architecture before paying for data loads.
    cfg.architecture.plan()?;
    let stats_ref = stats_reference(cfg, &upstream)?;
    let train_set = read_split_cache(&cfg.paths.windows, SplitName::Train, &upstream)?;
    let val_set = read_split_cache(&cfg.paths.windows, SplitName::Val1, &upstream)?;
    if val_set.is_empty() {
        log::warn!("val1 split is empty; training runs without early stopping");
    }

    let outcome = train(&cfg.architecture, &train_set, &val_set, &cfg.training)?;

    ensure_parent_dir(&cfg.paths.model)?;
    let header = ModelHeader {
        architecture: cfg.architecture.clone(),
        channel_names: channel_names(),
        normalization: Some(stats_ref),
        seed: cfg.training.seed,
        config_hash: Some(hash.clone()),
    };
    save_model(&cfg.paths.model, &header, &outcome.params)?;
    ensure_parent_dir(&cfg.paths.history)?;
    write_history_csv(&cfg.paths.history, &outcome.history)?;
    write_meta(&cfg.paths.model, "train", &hash)?;

    let last = outcome.history.epochs.last();
    Ok(json!({
        "command": "train",
        "model": cfg.paths.model.display().to_string(),
        "epochs_run": outcome.history.epochs.len(),
        "best_epoch": outcome.history.best_epoch,
        "best_val_acc": best_val_acc(&outcome.history),
        "final_train_acc": last.map(|e| e.train_acc),
        "train_windows": train_set.len(),
        "val1_windows": val_set.len(),
        "config_hash": hash,
    }))
}
