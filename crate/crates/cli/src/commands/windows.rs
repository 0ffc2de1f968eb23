use std::fs::File;
use std::io::BufWriter;

use serde_json::json;

use bwp_core::market::{
    apply_normalization, build_windows, filter_eligible_days, fit_normalization, label_windows,
    parse_trades_path, write_window_cache, LabeledWindow,
};

use crate::artifacts::{day_split, ensure_parent_dir, split_cache_path};
use crate::config::{synth_hash, windows_hash, RunConfig, SplitName};
use crate::meta::{verify_meta, write_meta};
use crate::CliError;

pub fn run(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let upstream = synth_hash(cfg);
    let hash = windows_hash(cfg);
    verify_meta(&cfg.paths.tape, &upstream)?;

    let parsed = parse_trades_path(&cfg.paths.tape)?;
    if !parsed.rejected.is_empty() {
        let first = &parsed.rejected[0];
        log::warn!(
            "dropped {} unparseable rows; first at row {}: {}",
            parsed.rejected.len(),
            first.row,
            first.reason
        );
    }
    let rejected = parsed.rejected.len();
    let days = filter_eligible_days(parsed.records, cfg.min_trades);
    if days.is_empty() {
        return Err(CliError::Config(format!(
            "no symbol-day has at least {} trades; lower min_trades or synthesize more activity",
            cfg.min_trades
        )));
    }

    // Whole symbol-days go to one split each, so no day straddles the
    // train/validation boundary.
    let mut sets: [Vec<LabeledWindow>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut next_id = 0u64;
    for day in &days {
        let unlabeled = build_windows(&day.trades, cfg.window_size, &cfg.channels)?;
        let labeled = label_windows(unlabeled, next_id);
        next_id += labeled.len() as u64;
        let slot = match day_split(&day.symbol, day.day, &cfg.split) {
            SplitName::Train => 0,
            SplitName::Val1 => 1,
            SplitName::Val2 => 2,
        };
        sets[slot].extend(labeled);
    }
    if sets[0].is_empty() {
        return Err(CliError::Config(
            "the training split received no windows; use more symbol-days or retune the split fractions"
                .into(),
        ));
    }

    // Statistics come from raw training windows only; the same transform
    // is then applied to all three splits.
    let stats = fit_normalization(&sets[0])?;
    for set in &mut sets {
        for w in set.iter_mut() {
            w.tensor = apply_normalization(&w.tensor, &stats)?;
        }
    }

    ensure_parent_dir(&cfg.paths.stats)?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(&cfg.paths.stats)?), &stats)?;
    write_meta(&cfg.paths.stats, "windows", &hash)?;

    ensure_parent_dir(&cfg.paths.windows)?;
    for (split, set) in [SplitName::Train, SplitName::Val1, SplitName::Val2]
        .into_iter()
        .zip(&sets)
    {
        let path = split_cache_path(&cfg.paths.windows, split);
        write_window_cache(&path, set)?;
        write_meta(&path, "windows", &hash)?;
    }

    Ok(json!({
        "command": "windows",
        "eligible_days": days.len(),
        "rejected_rows": rejected,
        "train_windows": sets[0].len(),
        "val1_windows": sets[1].len(),
        "val2_windows": sets[2].len(),
        "cache": cfg.paths.windows.display().to_string(),
        "config_hash": hash,
    }))
}
