//! Per-trade saliency extraction from a trained network.
//!
//! The influence of a trade on a window's prediction is read off the
//! gradient of the model output with respect to the input tensor: one
//! backward pass per window yields the full m-by-m-by-C tensor of
//! partial derivatives, and a trade's score is the sum of absolute
//! derivatives across its channel column. Scores carry no sign; they
//! measure how strongly the prediction reacts to the trade, not which
//! way it would move it.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::LabeledWindow;
use crate::net::{backward, forward, GradTarget, Mode, NetError, NetworkArchitecture, ParameterSet};
use crate::tensor::Tensor3;

#[derive(Debug, Error)]
pub enum InfluenceError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("grid alignment: {0}")]
    Alignment(String),
    #[error("non-finite gradient: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Scalar whose input gradient is extracted.
///
/// `Probability` reacts through the sigmoid, so saturated predictions
/// flatten toward zero; `Logit` sidesteps that and differs only by the
/// factor sigma'(logit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyTarget {
    #[default]
    Probability,
    Logit,
}

/// Input gradient of one window, with the forward outputs that anchored
/// it.
#[derive(Debug, Clone)]
pub struct InfluenceTensor {
    pub window_id: u64,
    pub target: SaliencyTarget,
    /// w[i][j][c] = d(target) / d(input[i][j][c]), taken in eval mode.
    pub w: Tensor3,
    pub logit: f64,
    pub prob: f64,
}

/// One trade's aggregated saliency, joined back to its tape identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeInfluenceScore {
    pub window_id: u64,
    pub position_i: usize,
    pub position_j: usize,
    pub trade_id: u64,
    /// Sum of |w| across the trade's channels.
    pub score: f64,
    /// score x 1000, the regression response unit.
    pub scaled_score: f64,
    pub predicted_label: u8,
}

/// Per-window failure captured during a batch run.
#[derive(Debug, Clone)]
pub struct WindowFailure {
    pub window_id: u64,
    pub error: String,
}

/// Exact reverse-mode gradient of `target` w.r.t. the input tensor, in
/// eval mode (dropout off). The input must already be normalized with
/// the stats the model was trained on.
pub fn input_gradient(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    window_id: u64,
    input: &Tensor3,
    target: SaliencyTarget,
) -> Result<InfluenceTensor, InfluenceError> {
    let cache = forward(arch, params, input, Mode::Eval)?;
    let grad_target = match target {
        SaliencyTarget::Probability => GradTarget::Probability,
        SaliencyTarget::Logit => GradTarget::Logit,
    };
    let grads = backward(arch, params, &cache, grad_target)?;
    if !grads.input.as_slice().iter().all(|v| v.is_finite()) {
        return Err(InfluenceError::NonFinite(format!(
            "input gradient of window {window_id} contains a non-finite value"
        )));
    }
    Ok(InfluenceTensor {
        window_id,
        target,
        w: grads.input,
        logit: cache.logit,
        prob: cache.prob,
    })
}

/// Collapses an influence tensor to one score per trade: grid cell
/// (i, j) holds trade `trade_ids[i*m + j]`, and its score sums |w_ijc|
/// over channels. The window's thresholded prediction is attached to
/// every row.
pub fn aggregate_trade_scores(
    influence: &InfluenceTensor,
    trade_ids: &[u64],
) -> Result<Vec<TradeInfluenceScore>, InfluenceError> {
    let (m, width, _) = influence.w.shape();
    if m != width {
        return Err(InfluenceError::Alignment(format!(
            "influence tensor of window {} is {m}x{width}, not square",
            influence.window_id
        )));
    }
    if trade_ids.len() != m * m {
        return Err(InfluenceError::Alignment(format!(
            "window {} has {} trade ids for a {m}x{m} grid",
            influence.window_id,
            trade_ids.len()
        )));
    }
    let predicted_label = u8::from(influence.prob > 0.5);
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let score: f64 = influence.w.cell(i, j).iter().map(|v| v.abs()).sum();
            out.push(TradeInfluenceScore {
                window_id: influence.window_id,
                position_i: i,
                position_j: j,
                trade_id: trade_ids[i * m + j],
                score,
                scaled_score: score * 1000.0,
                predicted_label,
            });
        }
    }
    Ok(out)
}

/// One window end to end: gradient, then per-trade aggregation.
pub fn window_influence(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    window: &LabeledWindow,
    target: SaliencyTarget,
) -> Result<Vec<TradeInfluenceScore>, InfluenceError> {
    let influence = input_gradient(arch, params, window.window_id, &window.tensor, target)?;
    aggregate_trade_scores(&influence, &window.trade_ids)
}

/// Scores every window in parallel. Output rows are ordered by
/// window_id then grid position; a window that fails is reported and
/// skipped without aborting the rest.
pub fn batch_influence(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    windows: &[LabeledWindow],
    target: SaliencyTarget,
) -> (Vec<TradeInfluenceScore>, Vec<WindowFailure>) {
    let mut results: Vec<(u64, Result<Vec<TradeInfluenceScore>, InfluenceError>)> = windows
        .par_iter()
        .map(|w| (w.window_id, window_influence(arch, params, w, target)))
        .collect();
    results.sort_by_key(|(id, _)| *id);
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (window_id, result) in results {
        match result {
            Ok(rows) => scores.extend(rows),
            Err(e) => failures.push(WindowFailure { window_id, error: e.to_string() }),
        }
    }
    (scores, failures)
}

/// Writes the score table as CSV with a header row. Floats print in
/// shortest round-trip form, so a re-read reproduces them bit-exactly.
pub fn write_score_table(path: &Path, scores: &[TradeInfluenceScore]) -> Result<(), InfluenceError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in scores {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_score_table(path: &Path) -> Result<Vec<TradeInfluenceScore>, InfluenceError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
