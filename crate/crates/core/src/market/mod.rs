//! Trade tape handling: parsing, synthesis, eligibility filtering, window
//! assembly, labeling, and channel normalization.
//!
//! A tape is a sequence of trades. Each (symbol, day) group with enough
//! trades is cut into non-overlapping blocks of `n = m * m` sequential
//! trades; each block becomes an m-by-m grid (trade k at row k / m, column
//! k mod m) with 35 feature channels per cell. A window's label is 1 when
//! the mean trade price of the next window in the same day exceeds the
//! window's own last trade price, 0 otherwise; the final window of a day
//! has no successor and is dropped.

mod cache;
mod channels;
mod filter;
mod normalize;
mod parse;
mod synth;
mod window;

pub(crate) use channels::slug as channels_slug;

pub use cache::{read_window_cache, write_window_cache, WINDOW_CACHE_MAGIC, WINDOW_CACHE_VERSION};
pub use channels::{
    channel_names, channel_transforms, extract_channels, venue_name, ChannelConfig, MarketHours,
    Transform, CHANNELS, SCALAR_CHANNELS, VENUES, VENUE_CHANNEL_BASE,
};
pub use filter::{filter_eligible_days, SymbolDayTrades, DEFAULT_MIN_TRADES};
pub use normalize::{apply_normalization, fit_normalization, invert_normalization, ChannelStats, NormalizationStats};
pub use parse::{parse_trades, parse_trades_path, ParsedTape, RowRejection, TapeFormat};
pub use synth::{
    generate_synthetic_tape, write_tape_csv, SignalPlant, SyntheticConfig, SyntheticTape,
};
pub use window::{build_windows, label_windows, LabeledWindow, UnlabeledWindow, DEFAULT_WINDOW_SIZES};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("tape schema mismatch: {0}")]
    Schema(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("window size {0} is not a perfect square of side >= 2")]
    WindowSize(usize),
    #[error("window cache is corrupt: {0}")]
    Cache(String),
    #[error("empty input: {0}")]
    Empty(String),
}

/// One executed trade with its quote context at execution time.
///
/// `trade_id` is assigned by the parser (file order) or the generator
/// (emission order) and is the join key between score tables and the tape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub trade_id: u64,
    pub symbol: String,
    pub day: NaiveDate,
    pub timestamp_ns: u64,
    pub venue_id: u8,
    pub bid_price: f64,
    pub bid_size: u64,
    pub offer_price: f64,
    pub offer_size: u64,
    pub nbid_price: f64,
    pub nbid_size: u64,
    pub noffer_price: f64,
    pub noffer_size: u64,
    pub trade_volume: u64,
    pub trade_price: f64,
    pub is_etf: bool,
    pub year: u16,
    /// Nanoseconds since the previous trade of the same symbol-day; 0 for
    /// the first trade of a day.
    pub time_diff_ns: u64,
}

impl TradeRecord {
    /// Field-level validity used by the parser and the generator: positive
    /// prices and volume, quote sides ordered, year matching the day.
    pub fn validate(&self) -> Result<(), String> {
        if self.trade_price <= 0.0 || self.trade_price.is_nan() {
            return Err(format!("trade_price {} not positive", self.trade_price));
        }
        if self.trade_volume == 0 {
            return Err("trade_volume is zero".into());
        }
        for (name, v) in [
            ("bid_price", self.bid_price),
            ("offer_price", self.offer_price),
            ("nbid_price", self.nbid_price),
            ("noffer_price", self.noffer_price),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} {v} invalid"));
            }
        }
        if self.bid_price > self.offer_price {
            return Err(format!(
                "bid {} above offer {}",
                self.bid_price, self.offer_price
            ));
        }
        if self.nbid_price > self.noffer_price {
            return Err(format!(
                "nbid {} above noffer {}",
                self.nbid_price, self.noffer_price
            ));
        }
        if usize::from(self.venue_id) >= VENUES.len() {
            return Err(format!("venue_id {} out of range", self.venue_id));
        }
        if i32::from(self.year) != self.day.year() {
            return Err(format!("year {} does not match day {}", self.year, self.day));
        }
        Ok(())
    }
}
