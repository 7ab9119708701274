//! Dependency-free SVG line charts.
//!
//! Output is a pure function of the inputs: identical series and config
//! give identical bytes.

use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use crate::marketdata::{Feature, SymbolSeries};
use crate::trainer::{PredictionSeries, TrainReport};

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("chart needs at least one non-empty series")]
    EmptySeries,
    #[error("series mix date and numeric x values")]
    MixedDomain,
    #[error("series `{0}` has mismatched x and y lengths")]
    LengthMismatch(String),
    #[error("series `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("invalid chart config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum XValues {
    Dates(Vec<NaiveDate>),
    Numbers(Vec<f64>),
}

impl XValues {
    fn len(&self) -> usize {
        match self {
            XValues::Dates(d) => d.len(),
            XValues::Numbers(n) => n.len(),
        }
    }

    fn is_dates(&self) -> bool {
        matches!(self, XValues::Dates(_))
    }

    fn numeric(&self) -> Vec<f64> {
        match self {
            XValues::Dates(d) => d.iter().map(|d| date_number(*d)).collect(),
            XValues::Numbers(n) => n.clone(),
        }
    }
}

fn date_number(d: NaiveDate) -> f64 {
    f64::from(d.num_days_from_ce())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: XValues,
    pub y: Vec<f64>,
}

/// A highlighted point drawn as a circle.
#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
    pub left: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartConfig {
    pub width: f64,
    pub height: f64,
    pub margins: Margins,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub palette: Vec<String>,
}

pub const DEFAULT_PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
const TICKS: usize = 6;

impl Default for ChartConfig {
    fn default() -> Self {
        Self {
            width: 900.0,
            height: 420.0,
            margins: Margins {
                top: 40.0,
                right: 150.0,
                bottom: 80.0,
                left: 80.0,
            },
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            palette: DEFAULT_PALETTE.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ChartConfig {
    pub fn titled(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), ChartError> {
        let m = &self.margins;
        if !(self.width > m.left + m.right && self.height > m.top + m.bottom) {
            return Err(ChartError::InvalidConfig("canvas smaller than its margins".into()));
        }
        if self.palette.is_empty() {
            return Err(ChartError::InvalidConfig("empty palette".into()));
        }
        Ok(())
    }
}

/// Affine map from a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearScale {
    pub domain: (f64, f64),
    pub range: (f64, f64),
}

impl LinearScale {
    pub fn map(&self, v: f64) -> f64 {
        let (d0, d1) = self.domain;
        let (r0, r1) = self.range;
        r0 + (v - d0) / (d1 - d0) * (r1 - r0)
    }
}

/// Data bounds padded by 5% of the span; a zero span widens to ±1.
pub fn padded_bounds(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// Smallest step from {1, 2, 2.5, 5}·10^k leaving at most six ticks in
/// `[lo, hi]`.
fn nice_step(lo: f64, hi: f64, integral: bool) -> f64 {
    let raw = (hi - lo) / (TICKS - 1) as f64;
    let mut magnitude = 10f64.powf(raw.log10().floor());
    loop {
        for m in [1.0, 2.0, 2.5, 5.0] {
            let step = m * magnitude;
            if integral && (step < 1.0 || step.fract() != 0.0) {
                continue;
            }
            if tick_values(lo, hi, step).len() <= TICKS {
                return step;
            }
        }
        magnitude *= 10.0;
    }
}

fn tick_values(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn decimals_for(step: f64) -> usize {
    let mut d = 0;
    while d < 12 && ((step * 10f64.powi(d as i32)).round() - step * 10f64.powi(d as i32)).abs() > 1e-9 {
        d += 1;
    }
    d
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub fn render_line_chart(series: &[Series], cfg: &ChartConfig) -> Result<String, ChartError> {
    render_chart(series, &[], cfg)
}

/// Line chart with optional highlighted points.
pub fn render_chart(series: &[Series], markers: &[Marker], cfg: &ChartConfig) -> Result<String, ChartError> {
    cfg.validate()?;
    if series.is_empty() || series.iter().any(|s| s.y.is_empty()) {
        return Err(ChartError::EmptySeries);
    }
    let dates = series[0].x.is_dates();
    if series.iter().any(|s| s.x.is_dates() != dates) {
        return Err(ChartError::MixedDomain);
    }
    let xs: Vec<Vec<f64>> = series.iter().map(|s| s.x.numeric()).collect();
    for (s, x) in series.iter().zip(&xs) {
        if s.x.len() != s.y.len() {
            return Err(ChartError::LengthMismatch(s.label.clone()));
        }
        if x.iter().chain(&s.y).any(|v| !v.is_finite()) {
            return Err(ChartError::NonFinite(s.label.clone()));
        }
    }
    let m = cfg.margins;
    let plot_w = cfg.width - m.left - m.right;
    let plot_h = cfg.height - m.top - m.bottom;
    let x_bounds = padded_bounds(xs.iter().flatten().copied().chain(markers.iter().map(|k| k.x)));
    let y_bounds = padded_bounds(series.iter().flat_map(|s| s.y.iter().copied()).chain(markers.iter().map(|k| k.y)));
    let sx = LinearScale {
        domain: x_bounds,
        range: (m.left, m.left + plot_w),
    };
    let sy = LinearScale {
        domain: y_bounds,
        range: (m.top + plot_h, m.top),
    };

    let mut svg = String::new();
    let (w, h) = (cfg.width, cfg.height);
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>"##);
    let _ = writeln!(
        svg,
        r#"<text class="title" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="16">{}</text>"#,
        m.left + plot_w / 2.0,
        m.top / 2.0 + 6.0,
        escape(&cfg.title)
    );

    // Axes, ticks and grid.
    let x0 = m.left;
    let y0 = m.top + plot_h;
    let _ = writeln!(svg, r##"<g class="axes" stroke="#333333" fill="none">"##);
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}"/>"#, x0 + plot_w);
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{:.2}"/>"#, m.top);
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g class="x-ticks">"#);
    let x_step = nice_step(x_bounds.0, x_bounds.1, true);
    for v in tick_values(x_bounds.0, x_bounds.1, x_step) {
        let px = sx.map(v);
        let label = if dates {
            NaiveDate::from_num_days_from_ce_opt(v as i32)
                .map(|d| d.to_string())
                .unwrap_or_default()
        } else {
            format!("{v:.0}")
        };
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="#333333"/>"##,
            y0 + 5.0
        );
        if dates {
            let ty = y0 + 12.0;
            let _ = writeln!(
                svg,
                r#"<text x="{px:.2}" y="{ty:.2}" text-anchor="end" transform="rotate(-45 {px:.2} {ty:.2})">{label}</text>"#
            );
        } else {
            let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, y0 + 18.0);
        }
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(svg, r#"<g class="y-ticks">"#);
    let y_step = nice_step(y_bounds.0, y_bounds.1, false);
    let decimals = decimals_for(y_step);
    for v in tick_values(y_bounds.0, y_bounds.1, y_step) {
        let py = sy.map(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/>"##,
            x0,
            x0 + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.*}</text>"#,
            x0 - 6.0,
            py + 4.0,
            decimals,
            v
        );
    }
    let _ = writeln!(svg, "</g>");

    let _ = writeln!(
        svg,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        m.left + plot_w / 2.0,
        cfg.height - 8.0,
        escape(&cfg.x_label)
    );
    let (lx, ly) = (16.0, m.top + plot_h / 2.0);
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
        escape(&cfg.y_label)
    );

    for (i, (s, x)) in series.iter().zip(&xs).enumerate() {
        let color = &cfg.palette[i % cfg.palette.len()];
        let points: Vec<String> = x
            .iter()
            .zip(&s.y)
            .map(|(&xv, &yv)| format!("{:.2},{:.2}", sx.map(xv), sy.map(yv)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-label="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(&s.label),
            points.join(" ")
        );
    }
    for mk in markers {
        let _ = writeln!(
            svg,
            r##"<circle class="marker" data-label="{}" cx="{:.2}" cy="{:.2}" r="4" fill="#000000"/>"##,
            escape(&mk.label),
            sx.map(mk.x),
            sy.map(mk.y)
        );
    }

    let _ = writeln!(svg, r#"<g class="legend">"#);
    let lx = m.left + plot_w + 16.0;
    for (i, s) in series.iter().enumerate() {
        let color = &cfg.palette[i % cfg.palette.len()];
        let ly = m.top + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
    }
    for (j, mk) in markers.iter().enumerate() {
        let ly = m.top + 10.0 + 20.0 * (series.len() + j) as f64;
        let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{ly:.2}" r="4" fill="#000000"/>"##, lx + 10.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&mk.label));
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// One price column over time.
pub fn render_price_chart(series: &SymbolSeries, feature: Feature) -> Result<String, ChartError> {
    let name = match feature {
        Feature::Open => "Opening",
        Feature::Close => "Closing",
        Feature::Low => "Low",
        Feature::High => "High",
        Feature::Volume => "Volume",
    };
    let unit = if feature == Feature::Volume { "shares" } else { "price" };
    let cfg = ChartConfig::titled(format!("{}: {name} price", series.symbol), "date", unit);
    let s = Series {
        label: feature.name().to_string(),
        x: XValues::Dates(series.dates()),
        y: series.column(feature),
    };
    render_line_chart(&[s], &cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryMetric {
    Loss,
    Rmse,
}

/// Training and validation curves over epochs with a marker on the best
/// validation epoch.
pub fn render_history(report: &TrainReport, metric: HistoryMetric) -> Result<String, ChartError> {
    if report.history.is_empty() {
        return Err(ChartError::EmptySeries);
    }
    let epochs: Vec<f64> = report.history.iter().map(|r| r.epoch as f64).collect();
    let (train, val): (Vec<f64>, Vec<Option<f64>>) = report
        .history
        .iter()
        .map(|r| match metric {
            HistoryMetric::Loss => (r.train_loss, r.val_loss),
            HistoryMetric::Rmse => (r.train_rmse, r.val_rmse),
        })
        .unzip();
    let (title, y_label) = match metric {
        HistoryMetric::Loss => ("Training and validation loss", "MSE loss"),
        HistoryMetric::Rmse => ("Training and validation RMSE", "RMSE"),
    };
    let mut series = vec![Series {
        label: "train".into(),
        x: XValues::Numbers(epochs.clone()),
        y: train.clone(),
    }];
    let monitored: Vec<f64> = if val.iter().all(Option::is_some) {
        let val: Vec<f64> = val.into_iter().flatten().collect();
        series.push(Series {
            label: "validation".into(),
            x: XValues::Numbers(epochs.clone()),
            y: val.clone(),
        });
        val
    } else {
        train
    };
    let (best_i, best_v) = monitored
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty history");
    let marker = Marker {
        label: format!("best epoch {}", report.history[best_i].epoch),
        x: epochs[best_i],
        y: best_v,
    };
    render_chart(&series, &[marker], &ChartConfig::titled(title, "epoch", y_label))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Scaled,
    Price,
}

/// Real versus predicted closes on a shared date axis.
pub fn render_prediction_overlay(pairs: &PredictionSeries, units: Units) -> Result<String, ChartError> {
    if pairs.is_empty() {
        return Err(ChartError::EmptySeries);
    }
    let (actual, predicted, y_label) = match units {
        Units::Scaled => (&pairs.scaled_actual, &pairs.scaled_predicted, "scaled close"),
        Units::Price => (&pairs.actual, &pairs.predicted, "close price"),
    };
    let series = [
        Series {
            label: "real".into(),
            x: XValues::Dates(pairs.dates.clone()),
            y: actual.clone(),
        },
        Series {
            label: "predicted".into(),
            x: XValues::Dates(pairs.dates.clone()),
            y: predicted.clone(),
        },
    ];
    render_line_chart(&series, &ChartConfig::titled("Model prediction vs real data", "date", y_label))
}
