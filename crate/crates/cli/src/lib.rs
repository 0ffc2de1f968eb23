//! Command-line pipeline over the core library: tape synthesis,
//! windowing, training, tuning, saliency, regression, reporting.
//! Every subcommand reads and writes files only, so stages can be
//! rerun, resumed, and checked independently.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod meta;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use bwp_core::influence::{InfluenceError, SaliencyTarget};
use bwp_core::market::MarketError;
use bwp_core::net::NetError;
use bwp_core::regression::RegError;
use bwp_core::tpe::TpeError;

use config::{RunConfig, SplitName};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("lineage: {0}")]
    Lineage(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tpe(#[from] TpeError),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
    #[error(transparent)]
    Regression(#[from] RegError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// CLI-side mirror of the saliency target, for flag parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Probability,
    Logit,
}

impl From<TargetArg> for SaliencyTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Probability => SaliencyTarget::Probability,
            TargetArg::Logit => SaliencyTarget::Logit,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bwp", version, about = "Trade-tape windowing, CNN training, and influence attribution pipeline")]
pub struct Cli {
    /// JSON run configuration; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Pipeline seed; also overrides the training seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trades per window (a perfect square). Applies to every stage, so
    /// pass it consistently or set it in the config file.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trade tape CSV.
    Synth {
        /// Tape output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cut a tape into labeled window tensors: three split caches plus
    /// normalization statistics fit on the training split only.
    Windows {
        #[arg(long)]
        tape: Option<PathBuf>,
        /// Cache stem; split names are inserted before the extension.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Minimum trades for a symbol-day to be windowed at all.
        #[arg(long)]
        min_trades: Option<usize>,
    },
    /// Train the classifier on the train split, early-stopped on val1.
    Train {
        #[arg(long)]
        windows: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Search hyperparameters; the trial log resumes across runs.
    Tune {
        #[arg(long)]
        windows: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Search-space JSON; omits to use the built-in space.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score per-trade influence on a split with a trained model.
    Explain {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        windows: Option<PathBuf>,
        #[arg(long)]
        split: Option<SplitName>,
        #[arg(long)]
        target: Option<TargetArg>,
        /// Score table output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regress influence scores on trade attributes with clustered
    /// standard errors; writes coefficient and summary tables.
    Regress {
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        tape: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Emit summary CSVs and SVG plots from a score table.
    Report {
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Windows { .. } => "windows",
            Command::Train { .. } => "train",
            Command::Tune { .. } => "tune",
            Command::Explain { .. } => "explain",
            Command::Regress { .. } => "regress",
            Command::Report { .. } => "report",
        }
    }
}

/// Folds the parsed flags into the loaded config. Flag overrides move
/// lineage hashes exactly as the matching config edits would, so mixed
/// flag/config runs stay honest about what produced what.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = config::load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.training.seed = seed;
    }
    if let Some(n) = cli.n {
        cfg.window_size = n;
    }
    match &cli.command {
        Command::Synth { out } => {
            clone_into(out, &mut cfg.paths.tape);
        }
        Command::Windows { tape, out, min_trades } => {
            clone_into(tape, &mut cfg.paths.tape);
            clone_into(out, &mut cfg.paths.windows);
            if let Some(m) = min_trades {
                cfg.min_trades = *m;
            }
        }
        Command::Train { windows, stats, model, history, epochs, lr, batch_size } => {
            clone_into(windows, &mut cfg.paths.windows);
            clone_into(stats, &mut cfg.paths.stats);
            clone_into(model, &mut cfg.paths.model);
            clone_into(history, &mut cfg.paths.history);
            if let Some(e) = epochs {
                cfg.training.epochs = *e;
            }
            if let Some(lr) = lr {
                cfg.training.learning_rate = *lr;
            }
            if let Some(b) = batch_size {
                cfg.training.batch_size = *b;
            }
        }
        Command::Tune { windows, stats, trials, space, log, model } => {
            clone_into(windows, &mut cfg.paths.windows);
            clone_into(stats, &mut cfg.paths.stats);
            clone_into(log, &mut cfg.paths.trial_log);
            clone_into(model, &mut cfg.paths.model);
            if space.is_some() {
                cfg.paths.space = space.clone();
            }
            if let Some(t) = trials {
                cfg.tune.trials = *t;
            }
        }
        Command::Explain { model, windows, split, target, out } => {
            clone_into(model, &mut cfg.paths.model);
            clone_into(windows, &mut cfg.paths.windows);
            clone_into(out, &mut cfg.paths.scores);
            if let Some(s) = split {
                cfg.explain.split = *s;
            }
            if let Some(t) = target {
                cfg.explain.target = (*t).into();
            }
        }
        Command::Regress { scores, tape, out_dir } => {
            clone_into(scores, &mut cfg.paths.scores);
            clone_into(tape, &mut cfg.paths.tape);
            clone_into(out_dir, &mut cfg.paths.report_dir);
        }
        Command::Report { scores, out_dir, history } => {
            clone_into(scores, &mut cfg.paths.scores);
            clone_into(out_dir, &mut cfg.paths.report_dir);
            clone_into(history, &mut cfg.paths.history);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn clone_into(src: &Option<PathBuf>, dst: &mut PathBuf) {
    if let Some(p) = src {
        dst.clone_from(p);
    }
}

/// Runs one parsed invocation and returns its machine-readable summary.
pub fn execute(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Synth { .. } => commands::synth::run(&cfg),
        Command::Windows { .. } => commands::windows::run(&cfg),
        Command::Train { .. } => commands::train::run(&cfg),
        Command::Tune { .. } => commands::tune::run(&cfg),
        Command::Explain { .. } => commands::explain::run(&cfg),
        Command::Regress { .. } => commands::regress::run(&cfg),
        Command::Report { .. } => commands::report::run(&cfg),
    }
}

/// Full process entry: parse, set up logging and the thread pool, run,
/// and print one line of JSON per outcome (stdout on success, stderr on
/// failure). Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/usage text and picks the code.
            let _ = e.print();
            return e.exit_code();
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BWP_LOG", "warn"))
        .format_timestamp(None)
        .try_init()
        .ok();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("thread pool already initialized, --threads ignored: {e}");
        }
    }
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", json!({ "command": cli.command.name(), "error": e.to_string() }));
            1
        }
    }
}
