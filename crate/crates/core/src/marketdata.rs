//! NYSE `prices.csv` ingestion.
//!
//! The file holds one row per (date, symbol) with raw, split-unadjusted
//! OHLCV values. Rows may appear in any order; each symbol's bars are sorted
//! by date after parsing.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::prng;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: cannot parse column `{column}` from {value:?}")]
    UnparsableField {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("duplicate bar for {symbol} on {date}")]
    DuplicateBar { symbol: String, date: NaiveDate },
    #[error("row {row}: {reason}")]
    BadBar { row: usize, reason: String },
    #[error("input has no data rows")]
    EmptyInput,
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One modelled column of a bar, in canonical feature order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Open,
    Close,
    Low,
    High,
    Volume,
}

impl Feature {
    pub const ALL: [Feature; 5] = [
        Feature::Open,
        Feature::Close,
        Feature::Low,
        Feature::High,
        Feature::Volume,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Open => "open",
            Feature::Close => "close",
            Feature::Low => "low",
            Feature::High => "high",
            Feature::Volume => "volume",
        }
    }

    /// Position in [`Feature::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub open: f64,
    pub close: f64,
    pub low: f64,
    pub high: f64,
    pub volume: f64,
}

impl PriceBar {
    pub fn feature(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Open => self.open,
            Feature::Close => self.close,
            Feature::Low => self.low,
            Feature::High => self.high,
            Feature::Volume => self.volume,
        }
    }

    /// Checks positivity and low/high containment. Violations are reported,
    /// never clamped.
    pub fn validate(&self) -> Result<(), String> {
        for f in [Feature::Open, Feature::Close, Feature::Low, Feature::High] {
            let v = self.feature(f);
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{f} must be a positive finite price, got {v}"));
            }
        }
        if !(self.volume.is_finite() && self.volume >= 0.0) {
            return Err(format!("volume must be non-negative, got {}", self.volume));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!(
                "low {} exceeds min(open, close) {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "high {} is below max(open, close) {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        Ok(())
    }
}

/// Date-ascending bars of one ticker. No two bars share a date.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSeries {
    pub symbol: String,
    pub bars: Vec<PriceBar>,
}

impl SymbolSeries {
    /// Builds a series from unordered bars, sorting by date and rejecting
    /// duplicate dates.
    pub fn new(symbol: impl Into<String>, mut bars: Vec<PriceBar>) -> Result<Self, MarketDataError> {
        let symbol = symbol.into();
        bars.sort_by_key(|b| b.date);
        if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(MarketDataError::DuplicateBar {
                symbol,
                date: w[0].date,
            });
        }
        Ok(Self { symbol, bars })
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    pub fn column(&self, feature: Feature) -> Vec<f64> {
        self.bars.iter().map(|b| b.feature(feature)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    series: BTreeMap<String, SymbolSeries>,
}

const REQUIRED: [&str; 7] = ["date", "symbol", "open", "close", "low", "high", "volume"];

impl PriceTable {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, MarketDataError> {
        let file = std::fs::File::open(path)?;
        parse_prices(std::io::BufReader::new(file))
    }

    /// Number of distinct symbols.
    pub fn census(&self) -> usize {
        self.series.len()
    }

    pub fn row_count(&self) -> usize {
        self.series.values().map(SymbolSeries::len).sum()
    }

    /// Sorted, duplicate-free symbol list.
    pub fn list_symbols(&self) -> Vec<String> {
        self.series.keys().cloned().collect()
    }

    pub fn select_symbol(&self, symbol: &str) -> Result<&SymbolSeries, MarketDataError> {
        self.series
            .get(symbol)
            .ok_or_else(|| MarketDataError::UnknownSymbol(symbol.to_string()))
    }

    /// Seeded uniform choice: the symbol at `prng(seed) mod census` of the
    /// sorted symbol list.
    pub fn pick_random_symbol(&self, seed: u64) -> &str {
        let index = (prng(seed) % self.census() as u64) as usize;
        self.series
            .keys()
            .nth(index)
            .expect("census is at least one after a successful parse")
    }

    pub fn iter(&self) -> impl Iterator<Item = &SymbolSeries> {
        self.series.values()
    }
}

/// Parses the `prices.csv` schema. Columns may appear in any order; extra
/// columns are ignored.
pub fn parse_prices<R: Read>(source: R) -> Result<PriceTable, MarketDataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let mut columns = [0usize; 7];
    for (slot, name) in columns.iter_mut().zip(REQUIRED) {
        *slot = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
            .ok_or(MarketDataError::MissingColumn(name))?;
    }
    let [c_date, c_symbol, c_open, c_close, c_low, c_high, c_volume] = columns;

    let mut grouped: BTreeMap<String, Vec<PriceBar>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let number = |idx: usize, column: &'static str| -> Result<f64, MarketDataError> {
            let raw = field(idx);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| MarketDataError::UnparsableField {
                    row,
                    column,
                    value: raw.to_string(),
                })
        };
        let date = parse_date(field(c_date)).ok_or_else(|| MarketDataError::UnparsableField {
            row,
            column: "date",
            value: field(c_date).to_string(),
        })?;
        let symbol = field(c_symbol);
        if symbol.is_empty() {
            return Err(MarketDataError::UnparsableField {
                row,
                column: "symbol",
                value: String::new(),
            });
        }
        let bar = PriceBar {
            date,
            open: number(c_open, "open")?,
            close: number(c_close, "close")?,
            low: number(c_low, "low")?,
            high: number(c_high, "high")?,
            volume: number(c_volume, "volume")?,
        };
        bar.validate()
            .map_err(|reason| MarketDataError::BadBar { row, reason })?;
        grouped.entry(symbol.to_string()).or_default().push(bar);
    }
    if grouped.is_empty() {
        return Err(MarketDataError::EmptyInput);
    }
    let series = grouped
        .into_iter()
        .map(|(symbol, bars)| SymbolSeries::new(symbol.clone(), bars).map(|s| (symbol, s)))
        .collect::<Result<_, _>>()?;
    Ok(PriceTable { series })
}

/// ISO-8601 date prefix; a trailing time component is ignored.
fn parse_date(raw: &str) -> Option<NaiveDate> {
    let prefix = raw.get(..10)?;
    match raw.as_bytes().get(10) {
        None | Some(b' ') | Some(b'T') => NaiveDate::parse_from_str(prefix, "%Y-%m-%d").ok(),
        _ => None,
    }
}
