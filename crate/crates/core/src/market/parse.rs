//! Tape readers for CSV (header required) and newline-delimited JSON.
//!
//! Malformed rows are rejected individually and counted; a missing column
//! in the CSV header is fatal. Timestamps must be non-decreasing within a
//! symbol-day; a row that steps backwards is rejected. When the optional
//! `time_diff_ns` column is absent the gap is recomputed per symbol-day,
//! with 0 for the first trade of a day.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::NaiveDate;
use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use super::{MarketError, TradeRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapeFormat {
    Csv,
    Ndjson,
}

impl TapeFormat {
    pub fn from_path(path: &Path) -> TapeFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ndjson") | Some("jsonl") => TapeFormat::Ndjson,
            _ => TapeFormat::Csv,
        }
    }
}

/// Row-level rejection diagnostic; `row` counts data rows from 1.
#[derive(Debug, Clone)]
pub struct RowRejection {
    pub row: u64,
    pub reason: String,
}

#[derive(Debug)]
pub struct ParsedTape {
    pub records: Vec<TradeRecord>,
    pub rejected: Vec<RowRejection>,
}

const REQUIRED_COLUMNS: [&str; 16] = [
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
];

#[derive(Debug, Deserialize)]
struct RawRow {
    symbol: String,
    day: String,
    timestamp_ns: u64,
    venue_id: u8,
    bid_price: f64,
    bid_size: u64,
    offer_price: f64,
    offer_size: u64,
    nbid_price: f64,
    nbid_size: u64,
    noffer_price: f64,
    noffer_size: u64,
    trade_volume: u64,
    trade_price: f64,
    #[serde(deserialize_with = "de_flag")]
    is_etf: bool,
    year: u16,
    #[serde(default, deserialize_with = "de_opt_u64")]
    time_diff_ns: Option<u64>,
}

/// Accepts true/false, 1/0, and their string spellings.
fn de_flag<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    struct FlagVisitor;
    impl<'de> Visitor<'de> for FlagVisitor {
        type Value = bool;
        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            write!(f, "a boolean flag (true/false/1/0)")
        }
        fn visit_bool<E: de::Error>(self, v: bool) -> Result<bool, E> {
            Ok(v)
        }
        fn visit_u64<E: de::Error>(self, v: u64) -> Result<bool, E> {
            match v {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(E::custom(format!("flag value {v} not in {{0,1}}"))),
            }
        }
        fn visit_i64<E: de::Error>(self, v: i64) -> Result<bool, E> {
            self.visit_u64(v as u64)
        }
        fn visit_str<E: de::Error>(self, v: &str) -> Result<bool, E> {
            match v.trim().to_ascii_lowercase().as_str() {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                other => Err(E::custom(format!("flag value {other:?} not recognized"))),
            }
        }
    }
    d.deserialize_any(FlagVisitor)
}

/// Treats an empty CSV cell as absent.
fn de_opt_u64<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
    struct OptVisitor;
    impl<'de> Visitor<'de> for OptVisitor {
        type Value = Option<u64>;
        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            write!(f, "an optional non-negative integer")
        }
        fn visit_none<E: de::Error>(self) -> Result<Self::Value, E> {
            Ok(None)
        }
        fn visit_unit<E: de::Error>(self) -> Result<Self::Value, E> {
            Ok(None)
        }
        fn visit_some<D2: Deserializer<'de>>(self, d: D2) -> Result<Self::Value, D2::Error> {
            d.deserialize_any(OptVisitor)
        }
        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
            Ok(Some(v))
        }
        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
            u64::try_from(v)
                .map(Some)
                .map_err(|_| E::custom(format!("negative time_diff_ns {v}")))
        }
        fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
            let t = v.trim();
            if t.is_empty() {
                return Ok(None);
            }
            t.parse::<u64>()
                .map(Some)
                .map_err(|e| E::custom(format!("time_diff_ns {t:?}: {e}")))
        }
    }
    d.deserialize_option(OptVisitor)
}

struct Sequencer {
    last_ts: HashMap<(String, NaiveDate), u64>,
    next_id: u64,
}

impl Sequencer {
    fn new() -> Self {
        Sequencer {
            last_ts: HashMap::new(),
            next_id: 0,
        }
    }

    /// Validates ordering, fills `time_diff_ns`, and assigns the trade id.
    fn admit(&mut self, raw: RawRow, row: u64) -> Result<TradeRecord, RowRejection> {
        let reject = |reason: String| RowRejection { row, reason };
        let day = NaiveDate::parse_from_str(&raw.day, "%Y-%m-%d")
            .map_err(|e| reject(format!("day {:?}: {e}", raw.day)))?;
        let key = (raw.symbol.clone(), day);
        let prev = self.last_ts.get(&key).copied();
        if let Some(prev_ts) = prev {
            if raw.timestamp_ns < prev_ts {
                return Err(reject(format!(
                    "timestamp {} precedes {} within {} {}",
                    raw.timestamp_ns, prev_ts, raw.symbol, day
                )));
            }
        }
        let time_diff_ns = match raw.time_diff_ns {
            Some(td) => td,
            None => prev.map_or(0, |p| raw.timestamp_ns - p),
        };
        let record = TradeRecord {
            trade_id: self.next_id,
            symbol: raw.symbol,
            day,
            timestamp_ns: raw.timestamp_ns,
            venue_id: raw.venue_id,
            bid_price: raw.bid_price,
            bid_size: raw.bid_size,
            offer_price: raw.offer_price,
            offer_size: raw.offer_size,
            nbid_price: raw.nbid_price,
            nbid_size: raw.nbid_size,
            noffer_price: raw.noffer_price,
            noffer_size: raw.noffer_size,
            trade_volume: raw.trade_volume,
            trade_price: raw.trade_price,
            is_etf: raw.is_etf,
            year: raw.year,
            time_diff_ns,
        };
        record.validate().map_err(reject)?;
        self.last_ts.insert(key, record.timestamp_ns);
        self.next_id += 1;
        Ok(record)
    }
}

pub fn parse_trades<R: Read>(reader: R, format: TapeFormat) -> Result<ParsedTape, MarketError> {
    match format {
        TapeFormat::Csv => parse_csv(reader),
        TapeFormat::Ndjson => parse_ndjson(reader),
    }
}

pub fn parse_trades_path(path: &Path) -> Result<ParsedTape, MarketError> {
    let file = File::open(path)?;
    parse_trades(BufReader::new(file), TapeFormat::from_path(path))
}

fn parse_csv<R: Read>(reader: R) -> Result<ParsedTape, MarketError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| MarketError::Schema(e.to_string()))?;
    let present: Vec<&str> = headers.iter().collect();
    let missing: Vec<&str> = REQUIRED_COLUMNS
        .iter()
        .filter(|c| !present.contains(c))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(MarketError::Schema(format!(
            "missing required columns {missing:?} (found {present:?})"
        )));
    }

    let mut seq = Sequencer::new();
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, item) in rdr.deserialize::<RawRow>().enumerate() {
        let row = i as u64 + 1;
        match item {
            Ok(raw) => match seq.admit(raw, row) {
                Ok(rec) => records.push(rec),
                Err(rej) => rejected.push(rej),
            },
            Err(e) => rejected.push(RowRejection {
                row,
                reason: e.to_string(),
            }),
        }
    }
    Ok(ParsedTape { records, rejected })
}

fn parse_ndjson<R: Read>(reader: R) -> Result<ParsedTape, MarketError> {
    let mut seq = Sequencer::new();
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut row = 0u64;
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        match serde_json::from_str::<RawRow>(&line) {
            Ok(raw) => match seq.admit(raw, row) {
                Ok(rec) => records.push(rec),
                Err(rej) => rejected.push(rej),
            },
            Err(e) => rejected.push(RowRejection {
                row,
                reason: e.to_string(),
            }),
        }
    }
    Ok(ParsedTape { records, rejected })
}
