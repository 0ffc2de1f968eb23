//! Deterministic evaluation over a labeled window set.

use rayon::prelude::*;

use crate::market::LabeledWindow;

use super::{bce_loss, forward, Mode, NetError, NetworkArchitecture, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub n: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

/// Mean BCE loss and confusion-matrix metrics in eval mode (no dropout).
/// A window is predicted positive iff its probability strictly exceeds
/// 0.5. Metrics with an empty denominator are reported as 0. Losses are
/// summed in window order, so the result is independent of thread count.
pub fn evaluate(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    windows: &[LabeledWindow],
) -> Result<EvalMetrics, NetError> {
    if windows.is_empty() {
        return Err(NetError::Config("cannot evaluate an empty window set".into()));
    }
    let outputs: Vec<(f64, u8)> = windows
        .par_iter()
        .map(|w| {
            let cache = forward(arch, params, &w.tensor, Mode::Eval)?;
            Ok((cache.prob, w.label))
        })
        .collect::<Result<Vec<_>, NetError>>()?;

    let mut loss_sum = 0.0;
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for &(prob, label) in &outputs {
        loss_sum += bce_loss(prob, f64::from(label));
        let pred = prob > 0.5;
        match (pred, label == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let n = windows.len();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalMetrics {
        n,
        loss: loss_sum / n as f64,
        accuracy: ratio(tp + tn, n),
        precision,
        recall,
        f1,
        true_pos: tp,
        true_neg: tn,
        false_pos: fp,
        false_neg: fn_,
    })
}
