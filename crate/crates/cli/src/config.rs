//! Run configuration and the lineage hashes stamped on artifacts.
//!
//! Each pipeline stage writes a hash of exactly the parameters that
//! determine its output, chained through the upstream stage's hash.
//! Downstream commands recompute the upstream hash from their own
//! effective config and refuse mismatched inputs, so a cache produced
//! under one window size can never be trained under another, while
//! knobs that only matter downstream (epochs, trial count) never
//! invalidate what is already on disk.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bwp_core::influence::SaliencyTarget;
use bwp_core::market::{ChannelConfig, SyntheticConfig, DEFAULT_MIN_TRADES};
use bwp_core::net::{reference_architecture, reference_training_config, NetworkArchitecture, TrainingConfig};
use bwp_core::regression::{InteractionFamily, PValueDist, SmallSample};
use bwp_core::tpe::SearchSpace;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub tape: PathBuf,
    /// Stem for the split caches: `windows.bwtw` becomes
    /// `windows.train.bwtw`, `windows.val1.bwtw`, `windows.val2.bwtw`.
    pub windows: PathBuf,
    pub stats: PathBuf,
    pub model: PathBuf,
    pub history: PathBuf,
    pub trial_log: PathBuf,
    /// Search-space JSON for `tune`; None uses the built-in default.
    pub space: Option<PathBuf>,
    pub scores: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            tape: "out/tape.csv".into(),
            windows: "out/windows.bwtw".into(),
            stats: "out/stats.json".into(),
            model: "out/model.bwnn".into(),
            history: "out/history.csv".into(),
            trial_log: "out/trials.ndjson".into(),
            space: None,
            scores: "out/scores.csv".into(),
            report_dir: "out/report".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub val1: f64,
    pub val2: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.8, val1: 0.1, val2: 0.1 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), CliError> {
        let parts = [self.train, self.val1, self.val2];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(CliError::Config(format!("split fractions must be non-negative: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CliError::Config(format!("split fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Which of the three split caches a command reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val1,
    Val2,
}

impl SplitName {
    pub fn suffix(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val1 => "val1",
            SplitName::Val2 => "val2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub split: SplitName,
    pub target: SaliencyTarget,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig { split: SplitName::Val1, target: SaliencyTarget::Probability }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub trials: usize,
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig { trials: 50, gamma: 0.5, n_startup: 10, n_candidates: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressConfig {
    pub families: BTreeSet<InteractionFamily>,
    pub pvalues: PValueDist,
    pub small_sample: SmallSample,
}

impl Default for RegressConfig {
    fn default() -> Self {
        RegressConfig {
            families: BTreeSet::from([InteractionFamily::SizeYear, InteractionFamily::TimeDiffYear]),
            pvalues: PValueDist::Normal,
            small_sample: SmallSample::Cr1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the tape generator and the tuner; `--seed` also overrides
    /// `training.seed`.
    pub seed: u64,
    /// Trades per window; must be a perfect square of side >= 2.
    pub window_size: usize,
    /// Symbol-days with fewer trades are dropped before windowing.
    pub min_trades: usize,
    pub split: SplitFractions,
    /// Market hours and year range for feature extraction and the
    /// regression's time-of-trade; `synth.hours` governs generation.
    pub channels: ChannelConfig,
    pub synth: SyntheticConfig,
    pub architecture: NetworkArchitecture,
    pub training: TrainingConfig,
    pub tune: TuneConfig,
    pub explain: ExplainConfig,
    pub regress: RegressConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            window_size: 289,
            min_trades: DEFAULT_MIN_TRADES,
            split: SplitFractions::default(),
            channels: ChannelConfig::default(),
            synth: SyntheticConfig::default(),
            architecture: reference_architecture(),
            training: reference_training_config(),
            tune: TuneConfig::default(),
            explain: ExplainConfig::default(),
            regress: RegressConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let m = (self.window_size as f64).sqrt().round() as usize;
        if m < 2 || m * m != self.window_size {
            return Err(CliError::Config(format!(
                "window_size {} is not a perfect square of side >= 2",
                self.window_size
            )));
        }
        self.split.validate()?;
        if self.min_trades < self.window_size {
            return Err(CliError::Config(format!(
                "min_trades {} below window_size {}: every eligible day must fill at least one window",
                self.min_trades, self.window_size
            )));
        }
        Ok(())
    }
}

/// Loads a RunConfig from JSON, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let cfg = match path {
        Some(p) => {
            let file = File::open(p)
                .map_err(|e| CliError::Config(format!("cannot open config {}: {e}", p.display())))?;
            serde_json::from_reader(file)
                .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    Ok(cfg)
}

fn hash_json(v: &serde_json::Value) -> String {
    // serde_json maps are BTree-backed, so key order (and thus the
    // hash) is stable across runs and field declaration shuffles.
    let canon = serde_json::to_string(v).expect("hash material serializes");
    let digest = Sha256::digest(canon.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn stage_hash(fields: &[(&str, serde_json::Value)]) -> String {
    let mut map = serde_json::Map::new();
    for (k, v) in fields {
        map.insert((*k).to_string(), v.clone());
    }
    hash_json(&serde_json::Value::Object(map))
}

fn val<T: Serialize>(t: &T) -> serde_json::Value {
    serde_json::to_value(t).expect("config fields serialize")
}

pub fn synth_hash(cfg: &RunConfig) -> String {
    stage_hash(&[("seed", val(&cfg.seed)), ("synth", val(&cfg.synth))])
}

pub fn windows_hash(cfg: &RunConfig) -> String {
    stage_hash(&[
        ("upstream", val(&synth_hash(cfg))),
        ("window_size", val(&cfg.window_size)),
        ("min_trades", val(&cfg.min_trades)),
        ("split", val(&cfg.split)),
        ("channels", val(&cfg.channels)),
    ])
}

pub fn train_hash(cfg: &RunConfig) -> String {
    stage_hash(&[
        ("upstream", val(&windows_hash(cfg))),
        ("architecture", val(&cfg.architecture)),
        ("training", val(&cfg.training)),
    ])
}

/// Trial count is deliberately excluded: the log is append-only and
/// any prefix of a longer run is a valid resume point.
pub fn tune_hash(cfg: &RunConfig, space: &SearchSpace) -> String {
    stage_hash(&[
        ("upstream", val(&windows_hash(cfg))),
        ("architecture", val(&cfg.architecture)),
        ("training", val(&cfg.training)),
        ("gamma", val(&cfg.tune.gamma)),
        ("n_startup", val(&cfg.tune.n_startup)),
        ("n_candidates", val(&cfg.tune.n_candidates)),
        ("space", val(space)),
    ])
}

/// Score tables are tied to the window stage only: which split or
/// saliency target was used changes the numbers but not which tape the
/// rows join against, and the model carries its own hash.
pub fn scores_hash(cfg: &RunConfig) -> String {
    stage_hash(&[("scores_of", val(&windows_hash(cfg)))])
}
