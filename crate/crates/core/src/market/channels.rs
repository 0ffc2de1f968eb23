//! The 35-channel feature map: 14 scalar trade attributes followed by 21
//! venue one-hot planes. Channel order is part of the on-disk artifact
//! contract (window cache, model header), so it is fixed here and persisted
//! with every model.

use serde::{Deserialize, Serialize};

use super::TradeRecord;

pub const SCALAR_CHANNELS: usize = 14;
pub const VENUE_CHANNEL_BASE: usize = SCALAR_CHANNELS;
pub const CHANNELS: usize = SCALAR_CHANNELS + VENUES.len();

/// Venue identifiers, indexed by `venue_id`. Index 0 (NYSE) is the
/// regression reference level.
pub const VENUES: [&str; 21] = [
    "NYSE",
    "NYSE American",
    "NASDAQ OMX BX",
    "NYSE National",
    "FINRA ADF",
    "MIAX",
    "Cboe EDGA",
    "Cboe EDGX",
    "NYSE Chicago",
    "NYSE Arca",
    "CTS",
    "NASDAQ",
    "MEMX",
    "IEX",
    "NASDAQ OMX PSX",
    "Cboe BYX",
    "Cboe BZX",
    "LTSE",
    "NASDAQ ISE",
    "CBOE",
    "OTHER",
];

pub fn venue_name(venue_id: u8) -> &'static str {
    VENUES[usize::from(venue_id)]
}

const SCALAR_NAMES: [&str; SCALAR_CHANNELS] = [
    "time_of_day",
    "bid_price",
    "bid_size",
    "offer_price",
    "offer_size",
    "trade_volume",
    "trade_price",
    "nbid_price",
    "nbid_size",
    "noffer_price",
    "noffer_size",
    "is_etf",
    "year_scaled",
    "time_diff_ns",
];

/// Channel names in tensor order, venue planes last.
pub fn channel_names() -> Vec<String> {
    let mut names: Vec<String> = SCALAR_NAMES.iter().map(|s| s.to_string()).collect();
    for v in VENUES.iter() {
        names.push(format!("venue_{}", slug(v)));
    }
    names
}

pub(crate) fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect::<String>()
        .split('_')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

/// Per-channel normalization transform. Prices and clock position are
/// z-scored directly; count-like channels with heavy right tails go through
/// log1p before z-scoring; indicator and already-bounded channels pass
/// through untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    ZScore,
    Log1pZScore,
}

pub fn channel_transforms() -> [Transform; CHANNELS] {
    let mut t = [Transform::Identity; CHANNELS];
    t[0] = Transform::ZScore; // time_of_day
    t[1] = Transform::ZScore; // bid_price
    t[2] = Transform::Log1pZScore; // bid_size
    t[3] = Transform::ZScore; // offer_price
    t[4] = Transform::Log1pZScore; // offer_size
    t[5] = Transform::Log1pZScore; // trade_volume
    t[6] = Transform::ZScore; // trade_price
    t[7] = Transform::ZScore; // nbid_price
    t[8] = Transform::Log1pZScore; // nbid_size
    t[9] = Transform::ZScore; // noffer_price
    t[10] = Transform::Log1pZScore; // noffer_size
    // 11 is_etf, 12 year_scaled: identity
    t[13] = Transform::Log1pZScore; // time_diff_ns
    t
}

/// Trading session bounds in nanoseconds since midnight; the default covers
/// regular hours 09:30-16:00.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketHours {
    pub open_ns: u64,
    pub close_ns: u64,
}

impl Default for MarketHours {
    fn default() -> Self {
        MarketHours {
            open_ns: (9 * 3600 + 30 * 60) * 1_000_000_000,
            close_ns: 16 * 3600 * 1_000_000_000,
        }
    }
}

impl MarketHours {
    /// Position of a timestamp inside the session, clamped to [0, 1].
    pub fn time_of_day(&self, timestamp_ns: u64) -> f64 {
        let span = (self.close_ns - self.open_ns) as f64;
        let t = (timestamp_ns.saturating_sub(self.open_ns)) as f64 / span;
        t.clamp(0.0, 1.0)
    }
}

/// Extraction-time settings: session clock and the year span used to map
/// the year channel onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub hours: MarketHours,
    pub year_min: u16,
    pub year_max: u16,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            hours: MarketHours::default(),
            year_min: 2017,
            year_max: 2021,
        }
    }
}

impl ChannelConfig {
    fn year_scaled(&self, year: u16) -> f64 {
        if self.year_max <= self.year_min {
            return 0.0;
        }
        let y = year.clamp(self.year_min, self.year_max);
        f64::from(y - self.year_min) / f64::from(self.year_max - self.year_min)
    }
}

/// Raw (pre-normalization) channel vector of one trade. Exactly one venue
/// plane is 1, the rest 0.
pub fn extract_channels(trade: &TradeRecord, cfg: &ChannelConfig) -> [f64; CHANNELS] {
    let mut ch = [0.0; CHANNELS];
    ch[0] = cfg.hours.time_of_day(trade.timestamp_ns);
    ch[1] = trade.bid_price;
    ch[2] = trade.bid_size as f64;
    ch[3] = trade.offer_price;
    ch[4] = trade.offer_size as f64;
    ch[5] = trade.trade_volume as f64;
    ch[6] = trade.trade_price;
    ch[7] = trade.nbid_price;
    ch[8] = trade.nbid_size as f64;
    ch[9] = trade.noffer_price;
    ch[10] = trade.noffer_size as f64;
    ch[11] = if trade.is_etf { 1.0 } else { 0.0 };
    ch[12] = cfg.year_scaled(trade.year);
    ch[13] = trade.time_diff_ns as f64;
    ch[VENUE_CHANNEL_BASE + usize::from(trade.venue_id)] = 1.0;
    ch
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn trade() -> TradeRecord {
        TradeRecord {
            trade_id: 0,
            symbol: "TST".into(),
            day: NaiveDate::from_ymd_opt(2019, 3, 4).unwrap(),
            timestamp_ns: MarketHours::default().open_ns + 11_700_000_000_000,
            venue_id: 9,
            bid_price: 99.97,
            bid_size: 200,
            offer_price: 100.03,
            offer_size: 300,
            nbid_price: 99.98,
            nbid_size: 500,
            noffer_price: 100.02,
            noffer_size: 400,
            trade_volume: 100,
            trade_price: 100.0,
            is_etf: false,
            year: 2019,
            time_diff_ns: 12_345,
        }
    }

    #[test]
    fn channel_count_and_names_line_up() {
        assert_eq!(CHANNELS, 35);
        let names = channel_names();
        assert_eq!(names.len(), CHANNELS);
        assert_eq!(names[0], "time_of_day");
        assert_eq!(names[VENUE_CHANNEL_BASE], "venue_nyse");
        assert_eq!(names[CHANNELS - 1], "venue_other");
    }

    #[test]
    fn exactly_one_venue_plane_is_hot() {
        let ch = extract_channels(&trade(), &ChannelConfig::default());
        let hot: Vec<usize> = (VENUE_CHANNEL_BASE..CHANNELS)
            .filter(|&c| ch[c] != 0.0)
            .collect();
        assert_eq!(hot, vec![VENUE_CHANNEL_BASE + 9]);
        assert_eq!(ch[VENUE_CHANNEL_BASE + 9], 1.0);
    }

    #[test]
    fn session_clock_maps_open_to_zero_and_close_to_one() {
        let hours = MarketHours::default();
        assert_eq!(hours.time_of_day(hours.open_ns), 0.0);
        assert_eq!(hours.time_of_day(hours.close_ns), 1.0);
        // 11_700 seconds is exactly half of the 23_400-second session.
        let mid = hours.open_ns + 11_700 * 1_000_000_000;
        assert!((hours.time_of_day(mid) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn year_scaling_covers_the_configured_span() {
        let cfg = ChannelConfig::default();
        assert_eq!(cfg.year_scaled(2017), 0.0);
        assert_eq!(cfg.year_scaled(2021), 1.0);
        assert!((cfg.year_scaled(2019) - 0.5).abs() < 1e-15);
    }
}
