//! Deterministic synthetic tape generator.
//!
//! Each symbol-day is an independent stream seeded from (seed, symbol,
//! day), so the tape is byte-identical for a given seed and config. Prices
//! follow a rounded random walk with configurable volatility; venues and
//! trade sizes come from configurable mixtures; quotes bracket the trade
//! price at a fixed half-spread.
//!
//! The optional signal plant writes a short burst of distinctively shaped
//! trades (fixed venue, fixed odd-lot volume, near-zero gaps) into a
//! window-sized block and tilts the next block's price drift upward, so
//! planted blocks precede up-moves and unplanted blocks precede
//! down-moves. The generator reports which trade ids form the bursts;
//! tests use that to compare influence scores against background trades.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{MarketError, MarketHours, TradeRecord, VENUES};

/// Burst pattern planted into some windows; see the module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalPlant {
    /// Window size n the downstream pipeline will cut; must be a perfect
    /// square and divide `trades_per_day`.
    pub window_trades: usize,
    /// Probability that a block carries the pattern.
    pub rate: f64,
    /// Number of consecutive pattern trades.
    pub pattern_len: usize,
    pub venue_id: u8,
    pub volume: u64,
    pub gap_ns: u64,
    /// Total price move (dollars) applied across the block after a planted
    /// block; the same magnitude is applied downward otherwise.
    pub drift: f64,
}

impl Default for SignalPlant {
    fn default() -> Self {
        SignalPlant {
            window_trades: 289,
            rate: 0.5,
            pattern_len: 12,
            venue_id: 5,
            volume: 77,
            gap_ns: 1_000,
            drift: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub symbols: usize,
    /// Probability that a symbol is an ETF.
    pub etf_share: f64,
    pub days: Vec<NaiveDate>,
    pub trades_per_day: usize,
    pub base_price: f64,
    /// Standard deviation of the per-trade price step, in dollars.
    pub walk_volatility: f64,
    pub half_spread: f64,
    /// Venue mixture over the 21 venue ids; must sum to 1.
    pub venue_weights: Vec<f64>,
    /// Size-bucket mixture: odd lot, round lot, 101-1000, 1001-9999,
    /// 10000 and above; must sum to 1.
    pub size_weights: [f64; 5],
    pub hours: MarketHours,
    pub plant: Option<SignalPlant>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let mut venue_weights = vec![0.0; VENUES.len()];
        // Rough national-market mix: lit exchanges heavy, the tail thin.
        let heavy = [(0usize, 0.18), (9, 0.14), (11, 0.22), (16, 0.12), (7, 0.10), (4, 0.10)];
        let mut rest = 1.0;
        for &(v, w) in &heavy {
            venue_weights[v] = w;
            rest -= w;
        }
        let light = venue_weights.iter().filter(|w| **w == 0.0).count();
        let share = rest / light as f64;
        for w in venue_weights.iter_mut() {
            if *w == 0.0 {
                *w = share;
            }
        }
        SyntheticConfig {
            symbols: 4,
            etf_share: 0.25,
            days: vec![
                NaiveDate::from_ymd_opt(2017, 3, 6).unwrap(),
                NaiveDate::from_ymd_opt(2018, 3, 5).unwrap(),
                NaiveDate::from_ymd_opt(2019, 3, 4).unwrap(),
                NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
                NaiveDate::from_ymd_opt(2021, 3, 1).unwrap(),
            ],
            trades_per_day: 6069, // 21 blocks of 289
            base_price: 100.0,
            walk_volatility: 0.02,
            half_spread: 0.02,
            venue_weights,
            size_weights: [0.25, 0.30, 0.30, 0.10, 0.05],
            hours: MarketHours::default(),
            plant: None,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<(), MarketError> {
        if self.symbols == 0 {
            return Err(MarketError::Config("symbols must be positive".into()));
        }
        if self.days.is_empty() {
            return Err(MarketError::Config("no days configured".into()));
        }
        if self.trades_per_day == 0 {
            return Err(MarketError::Config("trades_per_day must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.etf_share) {
            return Err(MarketError::Config(format!(
                "etf_share {} outside [0, 1]",
                self.etf_share
            )));
        }
        if self.venue_weights.len() != VENUES.len() {
            return Err(MarketError::Config(format!(
                "venue_weights has {} entries, need {}",
                self.venue_weights.len(),
                VENUES.len()
            )));
        }
        for (what, sum) in [
            ("venue_weights", self.venue_weights.iter().sum::<f64>()),
            ("size_weights", self.size_weights.iter().sum::<f64>()),
        ] {
            if (sum - 1.0).abs() > 1e-9 {
                return Err(MarketError::Config(format!("{what} sum to {sum}, expected 1")));
            }
        }
        if self.venue_weights.iter().any(|w| *w < 0.0) || self.size_weights.iter().any(|w| *w < 0.0)
        {
            return Err(MarketError::Config("mixture weights must be non-negative".into()));
        }
        if self.base_price <= 0.0
            || self.base_price.is_nan()
            || self.walk_volatility < 0.0
            || self.half_spread < 0.0
        {
            return Err(MarketError::Config("price parameters out of range".into()));
        }
        if let Some(p) = &self.plant {
            let m = (p.window_trades as f64).sqrt().round() as usize;
            if m < 2 || m * m != p.window_trades {
                return Err(MarketError::WindowSize(p.window_trades));
            }
            if p.pattern_len == 0 || p.pattern_len > p.window_trades {
                return Err(MarketError::Config(format!(
                    "pattern_len {} outside 1..={}",
                    p.pattern_len, p.window_trades
                )));
            }
            if !(0.0..=1.0).contains(&p.rate) {
                return Err(MarketError::Config(format!("plant rate {} outside [0, 1]", p.rate)));
            }
            if usize::from(p.venue_id) >= VENUES.len() || p.volume == 0 {
                return Err(MarketError::Config("plant venue/volume out of range".into()));
            }
            if !self.trades_per_day.is_multiple_of(p.window_trades) {
                return Err(MarketError::Config(format!(
                    "trades_per_day {} is not a multiple of the planted window size {}",
                    self.trades_per_day, p.window_trades
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SyntheticTape {
    pub trades: Vec<TradeRecord>,
    /// Trade ids of every planted pattern trade, in emission order.
    pub planted_trade_ids: Vec<u64>,
}

fn mix(parts: &[u64]) -> u64 {
    // splitmix64 over a running combination; stable seed derivation.
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

fn round_cents(p: f64) -> f64 {
    (p * 100.0).round() / 100.0
}

fn weighted_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn bucket_volume(bucket: usize, rng: &mut ChaCha8Rng) -> u64 {
    match bucket {
        0 => rng.random_range(1..=99),
        1 => 100,
        2 => rng.random_range(101..=1000),
        3 => rng.random_range(1001..=9999),
        _ => rng.random_range(10_000..=50_000),
    }
}

pub fn generate_synthetic_tape(
    config: &SyntheticConfig,
    seed: u64,
) -> Result<SyntheticTape, MarketError> {
    config.validate()?;
    let mut trades = Vec::with_capacity(config.symbols * config.days.len() * config.trades_per_day);
    let mut planted_trade_ids = Vec::new();
    let mut next_id = 0u64;

    let span_ns = config.hours.close_ns - config.hours.open_ns;
    let mean_gap = (span_ns as f64 * 0.9 / config.trades_per_day as f64).max(1.0);
    let gap_dist = Exp::new(1.0 / mean_gap).expect("positive rate");
    let step_dist = if config.walk_volatility > 0.0 {
        Some(Normal::new(0.0, config.walk_volatility).expect("positive sd"))
    } else {
        None
    };

    for s in 0..config.symbols {
        let symbol = format!("S{s:04}");
        let mut etf_rng = ChaCha8Rng::seed_from_u64(mix(&[seed, s as u64, 0xE7F]));
        let is_etf = etf_rng.random::<f64>() < config.etf_share;
        let symbol_base =
            config.base_price * (0.8 + 0.4 * s as f64 / config.symbols.max(1) as f64);

        for (di, &day) in config.days.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, s as u64, di as u64, 1]));
            let mut plant_rng = ChaCha8Rng::seed_from_u64(mix(&[seed, s as u64, di as u64, 2]));

            // Per-block drift directions and pattern placements.
            let (block_len, drifts, patterns) = match &config.plant {
                Some(p) => {
                    let blocks = config.trades_per_day / p.window_trades;
                    let mut drifts = vec![0.0; blocks];
                    let mut patterns: Vec<Option<(usize, usize)>> = vec![None; blocks];
                    for t in 0..blocks.saturating_sub(1) {
                        let planted = plant_rng.random::<f64>() < p.rate;
                        let per_trade = p.drift / p.window_trades as f64;
                        drifts[t + 1] = if planted { per_trade } else { -per_trade };
                        if planted {
                            let offset =
                                plant_rng.random_range(0..=p.window_trades - p.pattern_len);
                            patterns[t] = Some((offset, p.pattern_len));
                        }
                    }
                    (p.window_trades, drifts, patterns)
                }
                None => (config.trades_per_day, vec![0.0], vec![None]),
            };

            let mut price = symbol_base;
            let mut ts = config.hours.open_ns;
            let mut prev_ts: Option<u64> = None;
            for k in 0..config.trades_per_day {
                let block = (k / block_len).min(drifts.len() - 1);
                let in_block = k % block_len;
                let pattern_hit = patterns[block]
                    .map(|(off, len)| in_block >= off && in_block < off + len)
                    .unwrap_or(false);

                let gap = gap_dist.sample(&mut rng).round().max(0.0) as u64;
                let step = step_dist.map(|d| d.sample(&mut rng)).unwrap_or(0.0);
                let venue_u = rng.random::<f64>();
                let bucket = weighted_index(&config.size_weights, rng.random::<f64>());
                let volume = bucket_volume(bucket, &mut rng);

                let effective_gap = if pattern_hit {
                    config.plant.as_ref().map(|p| p.gap_ns).unwrap_or(gap)
                } else {
                    gap
                };
                ts = (ts + effective_gap).min(config.hours.close_ns);
                price = round_cents((price + step + drifts[block]).max(0.05));

                let venue_id = if pattern_hit {
                    config.plant.as_ref().unwrap().venue_id
                } else {
                    weighted_index(&config.venue_weights, venue_u) as u8
                };
                let trade_volume = if pattern_hit {
                    config.plant.as_ref().unwrap().volume
                } else {
                    volume
                };

                let nbid = round_cents((price - config.half_spread).max(0.01));
                let noffer = round_cents(price + config.half_spread);
                let bid = round_cents((nbid - config.half_spread * 0.5).max(0.01));
                let offer = round_cents(noffer + config.half_spread * 0.5);
                let mut lot = || 100 * rng.random_range(1u64..=10);
                let (bid_size, offer_size) = (lot(), lot());
                let (nbid_size, noffer_size) = (lot(), lot());

                let time_diff_ns = prev_ts.map_or(0, |p| ts - p);
                prev_ts = Some(ts);

                if pattern_hit {
                    planted_trade_ids.push(next_id);
                }
                trades.push(TradeRecord {
                    trade_id: next_id,
                    symbol: symbol.clone(),
                    day,
                    timestamp_ns: ts,
                    venue_id,
                    bid_price: bid,
                    bid_size,
                    offer_price: offer,
                    offer_size,
                    nbid_price: nbid,
                    nbid_size,
                    noffer_price: noffer,
                    noffer_size,
                    trade_volume,
                    trade_price: price,
                    is_etf,
                    year: day.year() as u16,
                    time_diff_ns,
                });
                next_id += 1;
            }
        }
    }
    Ok(SyntheticTape {
        trades,
        planted_trade_ids,
    })
}

/// Writes a tape in the input CSV schema (including `time_diff_ns`).
pub fn write_tape_csv(path: &std::path::Path, trades: &[TradeRecord]) -> Result<(), MarketError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "symbol",
        "day",
        "timestamp_ns",
        "venue_id",
        "bid_price",
        "bid_size",
        "offer_price",
        "offer_size",
        "nbid_price",
        "nbid_size",
        "noffer_price",
        "noffer_size",
        "trade_volume",
        "trade_price",
        "is_etf",
        "year",
        "time_diff_ns",
    ])?;
    for t in trades {
        w.write_record([
            t.symbol.clone(),
            t.day.format("%Y-%m-%d").to_string(),
            t.timestamp_ns.to_string(),
            t.venue_id.to_string(),
            t.bid_price.to_string(),
            t.bid_size.to_string(),
            t.offer_price.to_string(),
            t.offer_size.to_string(),
            t.nbid_price.to_string(),
            t.nbid_size.to_string(),
            t.noffer_price.to_string(),
            t.noffer_size.to_string(),
            t.trade_volume.to_string(),
            t.trade_price.to_string(),
            t.is_etf.to_string(),
            t.year.to_string(),
            t.time_diff_ns.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{parse_trades, TapeFormat};

    #[test]
    fn same_seed_reproduces_the_tape_exactly() {
        let cfg = SyntheticConfig {
            symbols: 3,
            trades_per_day: 50,
            ..SyntheticConfig::default()
        };
        let a = generate_synthetic_tape(&cfg, 42).unwrap();
        let b = generate_synthetic_tape(&cfg, 42).unwrap();
        assert_eq!(a.trades, b.trades);
        let c = generate_synthetic_tape(&cfg, 43).unwrap();
        assert_ne!(a.trades, c.trades);
    }

    #[test]
    fn records_satisfy_field_invariants_and_gap_consistency() {
        let cfg = SyntheticConfig {
            symbols: 2,
            trades_per_day: 200,
            plant: Some(SignalPlant {
                window_trades: 25,
                ..SignalPlant::default()
            }),
            ..SyntheticConfig::default()
        };
        let tape = generate_synthetic_tape(&cfg, 9).unwrap();
        let mut prev: Option<(&str, NaiveDate, u64)> = None;
        for t in &tape.trades {
            t.validate().unwrap();
            match prev {
                Some((sym, day, ts)) if sym == t.symbol && day == t.day => {
                    assert!(t.timestamp_ns >= ts);
                    assert_eq!(t.time_diff_ns, t.timestamp_ns - ts);
                }
                _ => assert_eq!(t.time_diff_ns, 0),
            }
            prev = Some((&t.symbol, t.day, t.timestamp_ns));
        }
    }

    #[test]
    fn etf_fraction_tracks_the_configured_share() {
        let cfg = SyntheticConfig {
            symbols: 1000,
            etf_share: 0.1,
            days: vec![NaiveDate::from_ymd_opt(2019, 3, 4).unwrap()],
            trades_per_day: 100,
            ..SyntheticConfig::default()
        };
        let tape = generate_synthetic_tape(&cfg, 7).unwrap();
        assert_eq!(tape.trades.len(), 100_000);
        let etf = tape.trades.iter().filter(|t| t.is_etf).count() as f64;
        let frac = etf / tape.trades.len() as f64;
        // ETF status is drawn per symbol, so the binomial lives on the
        // 1000 symbols; equal trade counts make trade and symbol shares equal.
        let sigma = (0.1f64 * 0.9 / 1000.0).sqrt();
        assert!((frac - 0.1).abs() <= 3.0 * sigma, "frac {frac}");
    }

    #[test]
    fn zero_volatility_without_plant_freezes_prices() {
        let cfg = SyntheticConfig {
            symbols: 2,
            trades_per_day: 60,
            walk_volatility: 0.0,
            plant: None,
            ..SyntheticConfig::default()
        };
        let tape = generate_synthetic_tape(&cfg, 3).unwrap();
        for pair in tape.trades.windows(2) {
            if pair[0].symbol == pair[1].symbol && pair[0].day == pair[1].day {
                assert_eq!(pair[0].trade_price, pair[1].trade_price);
            }
        }
    }

    #[test]
    fn planted_bursts_carry_the_configured_signature() {
        let plant = SignalPlant {
            window_trades: 16,
            rate: 1.0,
            pattern_len: 4,
            ..SignalPlant::default()
        };
        let cfg = SyntheticConfig {
            symbols: 1,
            days: vec![NaiveDate::from_ymd_opt(2019, 3, 4).unwrap()],
            trades_per_day: 64, // 4 blocks
            plant: Some(plant.clone()),
            ..SyntheticConfig::default()
        };
        let tape = generate_synthetic_tape(&cfg, 11).unwrap();
        // Blocks 0..2 each carry one burst (rate 1); the final block never
        // hosts a pattern because its label would be discarded anyway.
        assert_eq!(tape.planted_trade_ids.len(), 3 * plant.pattern_len);
        for &id in &tape.planted_trade_ids {
            let t = &tape.trades[id as usize];
            assert_eq!(t.venue_id, plant.venue_id);
            assert_eq!(t.trade_volume, plant.volume);
        }
    }

    #[test]
    fn csv_round_trip_preserves_every_field() {
        let cfg = SyntheticConfig {
            symbols: 2,
            trades_per_day: 40,
            ..SyntheticConfig::default()
        };
        let tape = generate_synthetic_tape(&cfg, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tape.csv");
        write_tape_csv(&path, &tape.trades).unwrap();
        let parsed = parse_trades(std::fs::File::open(&path).unwrap(), TapeFormat::Csv).unwrap();
        assert_eq!(parsed.rejected.len(), 0);
        assert_eq!(parsed.records, tape.trades);
    }
}
