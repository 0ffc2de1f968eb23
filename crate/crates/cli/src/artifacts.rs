//! Shared plumbing: split assignment, cache naming, file hashing.

use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use bwp_core::market::{read_window_cache, LabeledWindow};

use crate::config::{SplitFractions, SplitName};
use crate::meta::verify_meta;
use crate::CliError;

/// Streaming sha256 of a file's bytes, lowercase hex.
pub fn sha256_hex_file(path: &Path) -> Result<String, CliError> {
    let mut f = File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// `out/windows.bwtw` -> `out/windows.train.bwtw` and friends.
pub fn split_cache_path(base: &Path, split: SplitName) -> PathBuf {
    match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => base.with_extension(format!("{}.{ext}", split.suffix())),
        None => base.with_extension(split.suffix()),
    }
}

/// Deterministic split assignment for one symbol-day. All windows of a
/// day share a split, so no label's future leaks across the boundary.
/// The day's hash maps to [0, 1): below `train` goes to training, below
/// `train + val1` to the first validation set, the rest to the second.
pub fn day_split(symbol: &str, day: NaiveDate, fractions: &SplitFractions) -> SplitName {
    let digest = Sha256::digest(format!("{symbol}|{day}").as_bytes());
    let u = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
    let frac = u as f64 / (u64::MAX as f64 + 1.0);
    if frac < fractions.train {
        SplitName::Train
    } else if frac < fractions.train + fractions.val1 {
        SplitName::Val1
    } else {
        SplitName::Val2
    }
}

/// Reads one split's cache after checking its lineage.
pub fn read_split_cache(
    base: &Path,
    split: SplitName,
    expected_hash: &str,
) -> Result<Vec<LabeledWindow>, CliError> {
    let path = split_cache_path(base, split);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "window cache {} not found; run `windows` first",
            path.display()
        )));
    }
    verify_meta(&path, expected_hash)?;
    Ok(read_window_cache(&path)?)
}

pub fn ensure_parent_dir(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}
