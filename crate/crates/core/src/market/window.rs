//! Window assembly and labeling.
//!
//! Trades of an eligible symbol-day are consumed in time order in blocks of
//! `n = m * m`; trade k of a block sits at grid cell (k / m, k mod m). The
//! trailing remainder of fewer than n trades is discarded. Labels compare
//! the mean trade price of the following window against the current
//! window's final trade price, so the last window of every day is dropped.

use super::{extract_channels, ChannelConfig, MarketError, TradeRecord, CHANNELS};
use crate::tensor::Tensor3;
use serde::{Deserialize, Serialize};

/// Window sizes used in study configurations; every entry is a perfect
/// square (17, 23, 30, 37, 44 trades per side).
pub const DEFAULT_WINDOW_SIZES: [usize; 5] = [289, 529, 900, 1369, 1936];

/// A filled m-by-m grid that does not yet know its label.
#[derive(Debug, Clone)]
pub struct UnlabeledWindow {
    pub side: usize,
    pub tensor: Tensor3,
    pub trade_ids: Vec<u64>,
    /// Trade price of the final (bottom-right) trade; label anchor.
    pub last_trade_price: f64,
    /// Unweighted mean trade price over the window; successor side of the
    /// label comparison.
    pub mean_trade_price: f64,
}

/// A labeled training window. `label` is 1 when the next window's mean
/// trade price exceeded this window's last trade price.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub window_id: u64,
    pub side: usize,
    pub tensor: Tensor3,
    pub label: u8,
    pub trade_ids: Vec<u64>,
}

fn perfect_square_side(n: usize) -> Option<usize> {
    let m = (n as f64).sqrt().round() as usize;
    (m >= 2 && m * m == n).then_some(m)
}

/// Cuts one symbol-day into consecutive unlabeled windows of `n` trades.
pub fn build_windows(
    day_trades: &[TradeRecord],
    n: usize,
    cfg: &ChannelConfig,
) -> Result<Vec<UnlabeledWindow>, MarketError> {
    let m = perfect_square_side(n).ok_or(MarketError::WindowSize(n))?;
    let mut windows = Vec::with_capacity(day_trades.len() / n);
    for block in day_trades.chunks_exact(n) {
        let mut tensor = Tensor3::zeros(m, m, CHANNELS);
        let mut trade_ids = Vec::with_capacity(n);
        let mut price_sum = 0.0;
        for (k, trade) in block.iter().enumerate() {
            let (i, j) = (k / m, k % m);
            tensor.cell_mut(i, j).copy_from_slice(&extract_channels(trade, cfg));
            trade_ids.push(trade.trade_id);
            price_sum += trade.trade_price;
        }
        windows.push(UnlabeledWindow {
            side: m,
            tensor,
            trade_ids,
            last_trade_price: block[n - 1].trade_price,
            mean_trade_price: price_sum / n as f64,
        });
    }
    Ok(windows)
}

/// Labels consecutive windows of one symbol-day against their successors
/// and assigns ids starting at `first_id`. A day with fewer than two
/// windows yields nothing.
pub fn label_windows(windows: Vec<UnlabeledWindow>, first_id: u64) -> Vec<LabeledWindow> {
    if windows.len() < 2 {
        return Vec::new();
    }
    let successors: Vec<f64> = windows[1..].iter().map(|w| w.mean_trade_price).collect();
    windows
        .into_iter()
        .take(successors.len())
        .zip(successors)
        .enumerate()
        .map(|(k, (w, next_mean))| LabeledWindow {
            window_id: first_id + k as u64,
            side: w.side,
            tensor: w.tensor,
            label: u8::from(next_mean > w.last_trade_price),
            trade_ids: w.trade_ids,
        })
        .collect()
}
