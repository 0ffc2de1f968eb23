use std::path::{Path, PathBuf};

use serde_json::json;

use bwp_core::market::{generate_synthetic_tape, write_tape_csv};

use crate::artifacts::ensure_parent_dir;
use crate::config::{synth_hash, RunConfig};
use crate::meta::write_meta;
use crate::CliError;

/// Where the planted-trade id list lands, next to the tape itself.
pub fn planted_ids_path(tape: &Path) -> PathBuf {
    tape.with_extension("planted.csv")
}

pub fn run(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let hash = synth_hash(cfg);
    let tape = generate_synthetic_tape(&cfg.synth, cfg.seed)?;
    ensure_parent_dir(&cfg.paths.tape)?;
    write_tape_csv(&cfg.paths.tape, &tape.trades)?;
    write_meta(&cfg.paths.tape, "synth", &hash)?;
    if !tape.planted_trade_ids.is_empty() {
        let path = planted_ids_path(&cfg.paths.tape);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["trade_id"])?;
        for id in &tape.planted_trade_ids {
            w.write_record([id.to_string()])?;
        }
        w.flush()?;
    }
    Ok(json!({
        "command": "synth",
        "tape": cfg.paths.tape.display().to_string(),
        "trades": tape.trades.len(),
        "planted_trades": tape.planted_trade_ids.len(),
        "config_hash": hash,
    }))
}
