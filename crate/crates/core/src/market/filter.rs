//! Symbol-day eligibility: a security participates on a day only when it
//! traded at least `min_trades` times that day. Filtering is purely
//! count-based; no trade content is inspected.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::TradeRecord;

/// Default per-day activity floor.
pub const DEFAULT_MIN_TRADES: usize = 4000;

/// Trades of a single symbol on a single day, in time order.
#[derive(Debug, Clone)]
pub struct SymbolDayTrades {
    pub symbol: String,
    pub day: NaiveDate,
    pub trades: Vec<TradeRecord>,
}

/// Groups the tape by (symbol, day), drops groups below the activity floor,
/// and returns the survivors sorted by (symbol, day). Trades keep their
/// within-day order.
pub fn filter_eligible_days(
    records: Vec<TradeRecord>,
    min_trades: usize,
) -> Vec<SymbolDayTrades> {
    let mut groups: BTreeMap<(String, NaiveDate), Vec<TradeRecord>> = BTreeMap::new();
    for rec in records {
        groups
            .entry((rec.symbol.clone(), rec.day))
            .or_default()
            .push(rec);
    }
    groups
        .into_iter()
        .filter(|(_, trades)| trades.len() >= min_trades)
        .map(|((symbol, day), trades)| SymbolDayTrades { symbol, day, trades })
        .collect()
}
