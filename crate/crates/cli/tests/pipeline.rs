//! End-to-end runs of the command pipeline on a small synthetic tape:
//! every stage produces its artifact, reruns are byte-identical, the
//! tuner resumes from its log, and stale inputs are refused.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use bwp_cli::commands;
use bwp_cli::config::{Paths, RunConfig, SplitName};
use bwp_cli::CliError;
use bwp_core::market::{SyntheticConfig, CHANNELS};
use bwp_core::net::{
    load_model, ConvLayerSpec, DenseLayerSpec, NetworkArchitecture, TrainingConfig,
};

fn tiny_config(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig { seed: 7, window_size: 16, min_trades: 64, ..RunConfig::default() };
    cfg.synth = SyntheticConfig {
        symbols: 6,
        etf_share: 0.25,
        days: vec![
            NaiveDate::from_ymd_opt(2017, 3, 6).unwrap(),
            NaiveDate::from_ymd_opt(2018, 3, 5).unwrap(),
            NaiveDate::from_ymd_opt(2019, 3, 4).unwrap(),
        ],
        trades_per_day: 160,
        ..SyntheticConfig::default()
    };
    cfg.architecture = NetworkArchitecture {
        input_side: 4,
        input_channels: CHANNELS,
        conv: vec![ConvLayerSpec { filters: 8, kernel: 2, pool_after: false }],
        dense: vec![DenseLayerSpec { units: 16, dropout: 0.1 }],
    };
    cfg.training = TrainingConfig { epochs: 3, batch_size: 8, seed: 7, ..TrainingConfig::default() };
    // The train split has enough windows for a stable regression; val1
    // is tiny here.
    cfg.explain.split = SplitName::Train;
    cfg.tune.trials = 3;
    cfg.tune.n_startup = 2;
    cfg.paths = Paths {
        tape: dir.join("tape.csv"),
        windows: dir.join("windows.bwtw"),
        stats: dir.join("stats.json"),
        model: dir.join("model.bwnn"),
        history: dir.join("history.csv"),
        trial_log: dir.join("trials.ndjson"),
        space: None,
        scores: dir.join("scores.csv"),
        report_dir: dir.join("report"),
    };
    cfg
}

fn run_through_regress(cfg: &RunConfig) {
    commands::synth::run(cfg).expect("synth");
    commands::windows::run(cfg).expect("windows");
    commands::train::run(cfg).expect("train");
    commands::explain::run(cfg).expect("explain");
    commands::regress::run(cfg).expect("regress");
}

#[test]
fn the_whole_pipeline_runs_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());

    run_through_regress(&cfg);
    let report = commands::report::run(&cfg).expect("report");
    assert_eq!(report["command"], "report");

    let tracked = [
        dir.path().join("tape.csv"),
        dir.path().join("scores.csv"),
        dir.path().join("model.bwnn"),
        dir.path().join("report/coefficients_all.csv"),
        dir.path().join("report/regression_tables.txt"),
        dir.path().join("report/correlation.csv"),
    ];
    for p in &tracked {
        assert!(p.exists(), "missing artifact {}", p.display());
    }
    for extra in ["report/score_histogram.svg", "report/label_summary.csv", "report/top_trades.csv", "report/training_curves.svg", "history.csv", "stats.json"] {
        assert!(dir.path().join(extra).exists(), "missing {extra}");
    }

    let first: Vec<Vec<u8>> = tracked.iter().map(|p| fs::read(p).unwrap()).collect();
    // Wipe everything and replay the identical config.
    for entry in fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            fs::remove_dir_all(path).unwrap();
        } else {
            fs::remove_file(path).unwrap();
        }
    }
    run_through_regress(&cfg);
    for (p, before) in tracked.iter().zip(&first) {
        let after = fs::read(p).unwrap();
        assert_eq!(&after, before, "{} changed across identical reruns", p.display());
    }
}

#[test]
fn tuning_resumes_from_its_log_and_matches_a_fresh_run() {
    let fresh = tempfile::tempdir().unwrap();
    let resumed = tempfile::tempdir().unwrap();

    let cfg_fresh = tiny_config(fresh.path());
    commands::synth::run(&cfg_fresh).unwrap();
    commands::windows::run(&cfg_fresh).unwrap();
    let out_fresh = commands::tune::run(&cfg_fresh).unwrap();

    let mut cfg_resumed = tiny_config(resumed.path());
    commands::synth::run(&cfg_resumed).unwrap();
    commands::windows::run(&cfg_resumed).unwrap();
    cfg_resumed.tune.trials = 2;
    commands::tune::run(&cfg_resumed).unwrap();
    cfg_resumed.tune.trials = 3;
    let out_resumed = commands::tune::run(&cfg_resumed).unwrap();

    // The trial log carries no paths, so the two histories must agree
    // byte for byte, and the resumed run must land on the same winner.
    let log_fresh = fs::read(fresh.path().join("trials.ndjson")).unwrap();
    let log_resumed = fs::read(resumed.path().join("trials.ndjson")).unwrap();
    assert_eq!(log_fresh, log_resumed);
    assert_eq!(out_fresh["best_trial"], out_resumed["best_trial"]);
    assert_eq!(out_fresh["best_val_acc"], out_resumed["best_val_acc"]);
}

#[test]
fn a_single_trial_tune_saves_that_trials_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    commands::synth::run(&cfg).unwrap();
    commands::windows::run(&cfg).unwrap();
    cfg.tune.trials = 1;
    cfg.tune.n_startup = 1;
    let out = commands::tune::run(&cfg).unwrap();
    let (_, tuned_params) = load_model(&cfg.paths.model).unwrap();

    // Rebuild the same trial by hand through the train command.
    let suggested = out["best_params"].as_object().unwrap();
    cfg.training.learning_rate = suggested["learning_rate"].as_f64().unwrap();
    cfg.training.clip_norm = Some(suggested["clip_norm"].as_f64().unwrap());
    cfg.architecture.dense[0].dropout = suggested["dense1_dropout"].as_f64().unwrap();
    cfg.paths.model = dir.path().join("retrained.bwnn");
    commands::train::run(&cfg).unwrap();
    let (_, retrained_params) = load_model(&cfg.paths.model).unwrap();

    assert_eq!(tuned_params, retrained_params, "tune must save exactly the winning trial's weights");
}

#[test]
fn stale_upstream_artifacts_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    commands::synth::run(&cfg).unwrap();
    commands::windows::run(&cfg).unwrap();

    // A different seed regenerates the tape lineage, so the old tape and
    // caches no longer match the config.
    let mut moved = cfg.clone();
    moved.seed = 8;
    match commands::windows::run(&moved) {
        Err(CliError::Lineage(msg)) => assert!(msg.contains("config hash"), "unhelpful message: {msg}"),
        other => panic!("expected a lineage refusal, got {other:?}"),
    }

    // Same for a train run against caches cut at another window size.
    let mut resized = cfg.clone();
    resized.window_size = 25;
    resized.min_trades = 25;
    match commands::train::run(&resized) {
        Err(CliError::Lineage(_)) => {}
        other => panic!("expected a lineage refusal, got {other:?}"),
    }
}

#[test]
fn missing_inputs_give_actionable_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());

    let err = commands::windows::run(&cfg).unwrap_err();
    assert!(!err.to_string().is_empty());

    commands::synth::run(&cfg).unwrap();
    commands::windows::run(&cfg).unwrap();
    let err = commands::explain::run(&cfg).unwrap_err();
    let msg = err.to_string();
    assert!(!msg.is_empty(), "explain without a model must fail loudly");

    // Windowing a tape that has no eligible day names the floor.
    let mut strict = cfg.clone();
    strict.min_trades = 100_000;
    let msg = commands::windows::run(&strict).unwrap_err().to_string();
    assert!(msg.contains("100000"), "error should quote the floor: {msg}");
}

#[test]
fn flag_overrides_land_in_the_effective_config() {
    use clap::Parser;
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    fs::write(&cfg_path, "{}").unwrap();

    let cli = bwp_cli::Cli::try_parse_from([
        "bwp",
        "--config",
        cfg_path.to_str().unwrap(),
        "--seed",
        "99",
        "explain",
        "--split",
        "val2",
        "--out",
        "other.csv",
    ])
    .unwrap();
    let cfg = bwp_cli::effective_config(&cli).unwrap();
    assert_eq!(cfg.seed, 99);
    assert_eq!(cfg.training.seed, 99, "--seed drives the training seed too");
    assert_eq!(cfg.explain.split, SplitName::Val2);
    assert_eq!(cfg.paths.scores, Path::new("other.csv"));
}
