//! Synthetic OHLCV series for tests, demos and smoke runs.

use std::f64::consts::PI;
use std::fmt::Write as _;

use chrono::NaiveDate;

use crate::marketdata::{PriceBar, SymbolSeries};
use crate::rng::SplitMix64;

/// Standard normal draw (Box–Muller).
pub fn standard_normal(rng: &mut SplitMix64) -> f64 {
    let u1 = 1.0 - rng.next_f64();
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date") + chrono::Days::new(i as u64)
}

fn bars_from_closes(closes: &[f64], rng: &mut SplitMix64, wick: f64) -> Vec<PriceBar> {
    closes
        .iter()
        .enumerate()
        .map(|(i, &close)| {
            let open = if i == 0 { close } else { closes[i - 1] };
            let high = open.max(close) + wick * standard_normal(rng).abs();
            let low = open.min(close) - wick * standard_normal(rng).abs();
            let volume = (1.0e6 * (1.0 + 0.25 * standard_normal(rng))).max(1.0e4).round();
            PriceBar {
                date: day(i),
                open,
                close,
                low,
                high,
                volume,
            }
        })
        .collect()
}

/// Closes follow `level + amplitude·sin(2πt/period)` plus Gaussian noise
/// with σ = `noise_fraction · amplitude`.
pub fn noisy_sine(symbol: &str, len: usize, period: f64, noise_fraction: f64, seed: u64) -> SymbolSeries {
    let (level, amplitude) = (100.0, 10.0);
    let mut rng = SplitMix64::new(seed);
    let closes: Vec<f64> = (0..len)
        .map(|t| level + amplitude * (2.0 * PI * t as f64 / period).sin() + noise_fraction * amplitude * standard_normal(&mut rng))
        .collect();
    let bars = bars_from_closes(&closes, &mut rng, 0.01 * amplitude);
    SymbolSeries::new(symbol, bars).expect("distinct consecutive dates")
}

/// Geometric random walk with daily log-return volatility `sigma`.
pub fn random_walk(symbol: &str, len: usize, start: f64, sigma: f64, seed: u64) -> SymbolSeries {
    let mut rng = SplitMix64::new(seed);
    let mut price = start;
    let closes: Vec<f64> = (0..len)
        .map(|_| {
            price *= (sigma * standard_normal(&mut rng)).exp();
            price
        })
        .collect();
    let bars = bars_from_closes(&closes, &mut rng, 0.5 * sigma * start);
    SymbolSeries::new(symbol, bars).expect("distinct consecutive dates")
}

/// Renders series in the `prices.csv` layout.
pub fn to_prices_csv<'a>(series: impl IntoIterator<Item = &'a SymbolSeries>) -> String {
    let mut out = String::from("date,symbol,open,close,low,high,volume\n");
    for s in series {
        for b in &s.bars {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                b.date, s.symbol, b.open, b.close, b.low, b.high, b.volume
            );
        }
    }
    out
}
