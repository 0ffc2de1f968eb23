//! Attribution regression: influence scores on trade attributes.
//!
//! Scores from the saliency stage are joined back to the tape, expanded
//! into a dummy-coded design with interaction families, and fit by OLS
//! with standard errors clustered at the window level (the sampling
//! unit: one backward pass produces a whole window of correlated rows).
//!
//! Reference levels are round lot, year 2017, and NYSE; a row in that
//! cell carries only the intercept. Dummies are built for levels that
//! actually vary in the data: absent levels get no column, and a column
//! that is constant across all rows (all zero or all one) is pruned
//! with a diagnostic rather than fed into a singular solve.

mod design;
mod ols;
mod summary;

pub use design::{build_design, Design, DesignSpec, InteractionFamily};
pub use ols::{
    cluster_robust_se, ols_fit, run_subset_regressions, ClusteredCov, OlsSolution, PValueDist,
    RegressionFit, SmallSample, SubsetRegressions, SubsetTag,
};
pub use summary::{
    correlation_matrix, render_regression_tables, summarize_influence, write_correlation_csv,
    write_fit_csv, write_summary_csv, CorrelationTable, CorrVar, GroupAttr, SummaryRow,
    SummaryTable,
};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::influence::TradeInfluenceScore;
use crate::market::{venue_name, MarketHours, TradeRecord};

#[derive(Debug, Error)]
pub enum RegError {
    #[error("score/tape join: {0}")]
    Join(String),
    #[error("design: {0}")]
    Design(String),
    #[error("collinear design, dependent columns: {}", .0.join(", "))]
    Collinear(Vec<String>),
    #[error("clustering: {0}")]
    Cluster(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Trade-size partition by share volume. Round lots are the reference
/// level; every volume lands in exactly one bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeBucket {
    OddLot,
    RoundLot,
    B101To1000,
    B1001To9999,
    Ge10000,
}

impl SizeBucket {
    pub fn from_volume(volume: u64) -> SizeBucket {
        match volume {
            0..=99 => SizeBucket::OddLot,
            100 => SizeBucket::RoundLot,
            101..=1000 => SizeBucket::B101To1000,
            1001..=9999 => SizeBucket::B1001To9999,
            _ => SizeBucket::Ge10000,
        }
    }

    pub const ALL: [SizeBucket; 5] = [
        SizeBucket::OddLot,
        SizeBucket::RoundLot,
        SizeBucket::B101To1000,
        SizeBucket::B1001To9999,
        SizeBucket::Ge10000,
    ];

    pub const REFERENCE: SizeBucket = SizeBucket::RoundLot;

    pub fn label(self) -> &'static str {
        match self {
            SizeBucket::OddLot => "odd_lot",
            SizeBucket::RoundLot => "round_lot",
            SizeBucket::B101To1000 => "b101_1000",
            SizeBucket::B1001To9999 => "b1001_9999",
            SizeBucket::Ge10000 => "ge_10000",
        }
    }
}

pub const REFERENCE_YEAR: u16 = 2017;
pub const REFERENCE_VENUE: u8 = 0;

/// One observation of the regression: a scored trade with the tape
/// attributes the design matrix is built from. `window_id` is the
/// cluster key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub window_id: u64,
    pub trade_id: u64,
    /// Response: influence score x 1000.
    pub scaled_score: f64,
    pub size_bucket: SizeBucket,
    pub year: u16,
    pub venue_id: u8,
    pub is_etf: bool,
    /// Position within market hours, clamped to [0, 1].
    pub time_of_trade: f64,
    /// ln(1 + nanoseconds since the previous same-symbol trade).
    pub log_since_last: f64,
    pub trade_price: f64,
    pub predicted_label: u8,
}

/// Joins the score table to the tape by trade id and derives the
/// regression attributes. Every score row must match exactly one trade.
pub fn build_rows(
    scores: &[TradeInfluenceScore],
    tape: &[TradeRecord],
    hours: MarketHours,
) -> Result<Vec<RegressionRow>, RegError> {
    let mut by_id: HashMap<u64, &TradeRecord> = HashMap::with_capacity(tape.len());
    for trade in tape {
        if by_id.insert(trade.trade_id, trade).is_some() {
            return Err(RegError::Join(format!("duplicate trade_id {} in tape", trade.trade_id)));
        }
    }
    scores
        .iter()
        .map(|s| {
            let t = by_id.get(&s.trade_id).ok_or_else(|| {
                RegError::Join(format!(
                    "score row (window {}, trade {}) has no matching trade",
                    s.window_id, s.trade_id
                ))
            })?;
            if !s.scaled_score.is_finite() {
                return Err(RegError::NonFinite(format!(
                    "scaled_score of trade {} is {}",
                    s.trade_id, s.scaled_score
                )));
            }
            Ok(RegressionRow {
                window_id: s.window_id,
                trade_id: s.trade_id,
                scaled_score: s.scaled_score,
                size_bucket: SizeBucket::from_volume(t.trade_volume),
                year: t.year,
                venue_id: t.venue_id,
                is_etf: t.is_etf,
                time_of_trade: hours.time_of_day(t.timestamp_ns),
                log_since_last: (t.time_diff_ns as f64).ln_1p(),
                trade_price: t.trade_price,
                predicted_label: s.predicted_label,
            })
        })
        .collect()
}

/// Column-name slug for a venue, matching the tensor channel names.
pub(crate) fn venue_label(venue_id: u8) -> String {
    format!("venue_{}", crate::market::channels_slug(venue_name(venue_id)))
}
