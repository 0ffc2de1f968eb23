use std::fs::File;
use std::io::BufReader;

use serde_json::json;

use bwp_core::market::channel_names;
use bwp_core::net::{save_model, train, ModelHeader, NetworkArchitecture, TrainingConfig};
use bwp_core::tpe::{optimize, ParamDomain, ParamMap, ParamValue, SearchSpace, TpeConfig};

use crate::artifacts::{ensure_parent_dir, read_split_cache};
use crate::commands::train::{best_val_acc, stats_reference};
use crate::config::{tune_hash, windows_hash, RunConfig, SplitName};
use crate::meta::{verify_meta, write_meta};
use crate::CliError;

/// The stock search space: the two optimizer knobs plus the dropout of
/// every hidden dense stage in the configured architecture.
pub fn default_space(arch: &NetworkArchitecture) -> SearchSpace {
    let mut space = SearchSpace::new();
    space.insert("learning_rate".into(), ParamDomain::LogUniform { lo: 1e-4, hi: 3e-2 });
    space.insert("clip_norm".into(), ParamDomain::Uniform { lo: 0.25, hi: 4.0 });
    for i in 1..=arch.dense.len() {
        space.insert(format!("dense{i}_dropout"), ParamDomain::Uniform { lo: 0.0, hi: 0.5 });
    }
    space
}

pub fn load_space(cfg: &RunConfig) -> Result<SearchSpace, CliError> {
    match &cfg.paths.space {
        Some(p) => Ok(serde_json::from_reader(BufReader::new(File::open(p)?))?),
        None => Ok(default_space(&cfg.architecture)),
    }
}

fn f64_of(name: &str, v: &ParamValue) -> Result<f64, CliError> {
    v.as_f64()
        .ok_or_else(|| CliError::Config(format!("search dimension `{name}` needs a numeric domain")))
}

fn count_of(name: &str, v: &ParamValue) -> Result<usize, CliError> {
    let i = v
        .as_i64()
        .ok_or_else(|| CliError::Config(format!("search dimension `{name}` needs an integer domain")))?;
    if i < 1 {
        return Err(CliError::Config(format!("search dimension `{name}` must stay positive, got {i}")));
    }
    Ok(i as usize)
}

/// Splits "conv2_kernel" into (2, "kernel") given the "conv" prefix.
fn layer_ref<'a>(name: &'a str, prefix: &str) -> Option<(usize, &'a str)> {
    let rest = name.strip_prefix(prefix)?;
    let (idx, field) = rest.split_once('_')?;
    idx.parse().ok().map(|i: usize| (i, field))
}

/// Overlays one suggestion onto the base architecture and training
/// config. Dimension names address training knobs directly and layers
/// as `conv{i}_filters|kernel` / `dense{i}_units|dropout`, 1-based.
pub fn apply_params(
    base_arch: &NetworkArchitecture,
    base_train: &TrainingConfig,
    params: &ParamMap,
) -> Result<(NetworkArchitecture, TrainingConfig), CliError> {
    let mut arch = base_arch.clone();
    let mut tc = base_train.clone();
    for (name, value) in params {
        match name.as_str() {
            "learning_rate" => tc.learning_rate = f64_of(name, value)?,
            "clip_norm" => tc.clip_norm = Some(f64_of(name, value)?),
            "batch_size" => tc.batch_size = count_of(name, value)?,
            "epochs" => tc.epochs = count_of(name, value)?,
            _ => {
                if let Some((idx, field)) = layer_ref(name, "conv") {
                    let stages = arch.conv.len();
                    let layer = idx
                        .checked_sub(1)
                        .and_then(|i| arch.conv.get_mut(i))
                        .ok_or_else(|| {
                            CliError::Config(format!(
                                "`{name}` addresses conv stage {idx} but the architecture has {stages}"
                            ))
                        })?;
                    match field {
                        "filters" => layer.filters = count_of(name, value)?,
                        "kernel" => layer.kernel = count_of(name, value)?,
                        _ => {
                            return Err(CliError::Config(format!(
                                "unknown conv field in search dimension `{name}`"
                            )))
                        }
                    }
                } else if let Some((idx, field)) = layer_ref(name, "dense") {
                    let stages = arch.dense.len();
                    let layer = idx
                        .checked_sub(1)
                        .and_then(|i| arch.dense.get_mut(i))
                        .ok_or_else(|| {
                            CliError::Config(format!(
                                "`{name}` addresses dense stage {idx} but the architecture has {stages}"
                            ))
                        })?;
                    match field {
                        "units" => layer.units = count_of(name, value)?,
                        "dropout" => layer.dropout = f64_of(name, value)?,
                        _ => {
                            return Err(CliError::Config(format!(
                                "unknown dense field in search dimension `{name}`"
                            )))
                        }
                    }
                } else {
                    return Err(CliError::Config(format!("unknown search dimension `{name}`")));
                }
            }
        }
    }
    Ok((arch, tc))
}

/// A representative value from each domain, used to vet dimension names
/// against the architecture before any trial runs.
fn probe_value(domain: &ParamDomain) -> ParamValue {
    match domain {
        ParamDomain::Uniform { lo, .. } | ParamDomain::LogUniform { lo, .. } => {
            ParamValue::Float(*lo)
        }
        ParamDomain::Int { lo, .. } => ParamValue::Int(*lo),
        ParamDomain::Categorical { choices } => {
            ParamValue::Cat(choices.first().cloned().unwrap_or_default())
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let upstream = windows_hash(cfg);
    let space = load_space(cfg)?;
    let hash = tune_hash(cfg, &space);

    let probe: ParamMap = space.iter().map(|(k, d)| (k.clone(), probe_value(d))).collect();
    apply_params(&cfg.architecture, &cfg.training, &probe)?;

    let stats_ref = stats_reference(cfg, &upstream)?;
    let train_set = read_split_cache(&cfg.paths.windows, SplitName::Train, &upstream)?;
    let val_set = read_split_cache(&cfg.paths.windows, SplitName::Val1, &upstream)?;
    if val_set.is_empty() {
        return Err(CliError::Config(
            "tuning needs a non-empty val1 split to score trials".into(),
        ));
    }

    // A pre-existing log resumes the run, so it must come from this
    // exact search setup.
    if cfg.paths.trial_log.exists() {
        verify_meta(&cfg.paths.trial_log, &hash)?;
    } else {
        ensure_parent_dir(&cfg.paths.trial_log)?;
    }

    let tpe_cfg = TpeConfig {
        gamma: cfg.tune.gamma,
        n_startup: cfg.tune.n_startup,
        n_candidates: cfg.tune.n_candidates,
        seed: cfg.seed,
    };
    // Every trial trains with the same seed, so trials differ only in
    // the hyperparameters and resumed runs replay identically.
    let result = optimize(&space, &tpe_cfg, cfg.tune.trials, Some(&cfg.paths.trial_log), |params| {
        match trial_objective(cfg, &train_set, &val_set, params) {
            Ok(obj) => obj,
            Err(e) => {
                log::warn!("trial failed: {e}");
                f64::NAN
            }
        }
    })?;
    write_meta(&cfg.paths.trial_log, "tune", &hash)?;

    let best_idx = result
        .best
        .ok_or_else(|| CliError::Config("every trial failed; nothing to retrain".into()))?;
    let best = result.trials[best_idx].clone();

    // Retraining the winner reproduces its trial bit for bit (same seed,
    // same data), so the saved model is the best trial's model.
    let (arch, tc) = apply_params(&cfg.architecture, &cfg.training, &best.params)?;
    let outcome = train(&arch, &train_set, &val_set, &tc)?;
    ensure_parent_dir(&cfg.paths.model)?;
    let header = ModelHeader {
        architecture: arch,
        channel_names: channel_names(),
        normalization: Some(stats_ref),
        seed: tc.seed,
        config_hash: Some(hash.clone()),
    };
    save_model(&cfg.paths.model, &header, &outcome.params)?;
    write_meta(&cfg.paths.model, "tune", &hash)?;

    let failed = result.trials.iter().filter(|t| t.objective.is_none()).count();
    Ok(json!({
        "command": "tune",
        "trials": result.trials.len(),
        "failed_trials": failed,
        "best_trial": best.id,
        "best_val_acc": best.objective.map(|o| -o),
        "best_params": serde_json::to_value(&best.params)?,
        "model": cfg.paths.model.display().to_string(),
        "config_hash": hash,
    }))
}

fn trial_objective(
    cfg: &RunConfig,
    train_set: &[bwp_core::market::LabeledWindow],
    val_set: &[bwp_core::market::LabeledWindow],
    params: &ParamMap,
) -> Result<f64, CliError> {
    let (arch, tc) = apply_params(&cfg.architecture, &cfg.training, params)?;
    let outcome = train(&arch, train_set, val_set, &tc)?;
    let acc = best_val_acc(&outcome.history)
        .ok_or_else(|| CliError::Config("trial produced no validation accuracy".into()))?;
    // TPE minimizes; the search target is validation accuracy.
    Ok(-acc)
}
