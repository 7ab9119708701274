//! Min-max scaling, lookback windowing and chronological splits.

use chrono::NaiveDate;
use ndarray::{s, Array1, Array3, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::{Feature, SymbolSeries};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("feature `{0}` is constant over the fit range")]
    DegenerateFeature(Feature),
    #[error("invalid scaler fit range [0, {train_end}) for a series of {len} rows")]
    InvalidFitRange { train_end: usize, len: usize },
    #[error("series of {len} rows is too short for a {time_steps}-step window")]
    SeriesTooShort { len: usize, time_steps: usize },
    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),
    #[error("invalid split fractions: test {test}, validation {validation}")]
    InvalidFractions { test: f64, validation: f64 },
    #[error("time_steps must be at least 1")]
    ZeroTimeSteps,
}

/// Per-feature minimum and maximum over rows `[fit_start, fit_end)`, in
/// [`Feature::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: [f64; 5],
    pub max: [f64; 5],
    pub fit_start: usize,
    pub fit_end: usize,
}

impl ScalerParams {
    pub fn scale(&self, feature: Feature, value: f64) -> f64 {
        let f = feature.index();
        (value - self.min[f]) / (self.max[f] - self.min[f])
    }

    pub fn unscale(&self, feature: Feature, scaled: f64) -> f64 {
        let f = feature.index();
        scaled * (self.max[f] - self.min[f]) + self.min[f]
    }

    /// Maps a scaled close back to price units.
    pub fn inverse_target(&self, scaled_close: f64) -> f64 {
        self.unscale(Feature::Close, scaled_close)
    }

    /// Scales every bar. Values outside the fit range land outside [0, 1]
    /// and are not clipped.
    pub fn transform(&self, series: &SymbolSeries) -> ScaledSeries {
        let rows = series
            .bars
            .iter()
            .map(|bar| Feature::ALL.map(|f| self.scale(f, bar.feature(f))))
            .collect();
        ScaledSeries {
            dates: series.dates(),
            rows,
        }
    }
}

/// Fits the scaler on rows `[0, train_end)` only.
pub fn fit_scaler(series: &SymbolSeries, train_end: usize) -> Result<ScalerParams, PreprocessError> {
    if train_end < 2 || train_end > series.len() {
        return Err(PreprocessError::InvalidFitRange {
            train_end,
            len: series.len(),
        });
    }
    let mut min = [f64::INFINITY; 5];
    let mut max = [f64::NEG_INFINITY; 5];
    for bar in &series.bars[..train_end] {
        for f in Feature::ALL {
            let v = bar.feature(f);
            min[f.index()] = min[f.index()].min(v);
            max[f.index()] = max[f.index()].max(v);
        }
    }
    if let Some(f) = Feature::ALL.into_iter().find(|f| max[f.index()] <= min[f.index()]) {
        return Err(PreprocessError::DegenerateFeature(f));
    }
    Ok(ScalerParams {
        min,
        max,
        fit_start: 0,
        fit_end: train_end,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSeries {
    pub dates: Vec<NaiveDate>,
    /// One row per bar in [`Feature::ALL`] order.
    pub rows: Vec<[f64; 5]>,
}

impl ScaledSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Which columns feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    #[default]
    Ohlcv,
    /// Close and volume only.
    Cv,
}

impl FeatureSet {
    pub fn features(self) -> &'static [Feature] {
        match self {
            FeatureSet::Ohlcv => &Feature::ALL,
            FeatureSet::Cv => &[Feature::Close, Feature::Volume],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Ohlcv => "ohlcv",
            FeatureSet::Cv => "cv",
        }
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ohlcv" => Ok(FeatureSet::Ohlcv),
            "cv" => Ok(FeatureSet::Cv),
            other => Err(format!("unknown feature set `{other}` (expected ohlcv or cv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub time_steps: usize,
    pub features: FeatureSet,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            time_steps: 25,
            features: FeatureSet::Ohlcv,
        }
    }
}

impl WindowSpec {
    pub fn input_dim(&self) -> usize {
        self.features.features().len()
    }
}

/// Samples `[N, T, D]` with next-day scaled close targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub x: Array3<f64>,
    pub y: Array1<f64>,
    /// Raw-series row of each sample's target.
    pub target_row_index: Vec<usize>,
    pub target_dates: Vec<NaiveDate>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn time_steps(&self) -> usize {
        self.x.len_of(Axis(1))
    }

    pub fn input_dim(&self) -> usize {
        self.x.len_of(Axis(2))
    }

    /// Contiguous sample range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> WindowedDataset {
        WindowedDataset {
            x: self.x.slice(s![start..end, .., ..]).to_owned(),
            y: self.y.slice(s![start..end]).to_owned(),
            target_row_index: self.target_row_index[start..end].to_vec(),
            target_dates: self.target_dates[start..end].to_vec(),
        }
    }

    /// Samples at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> WindowedDataset {
        WindowedDataset {
            x: self.x.select(Axis(0), indices),
            y: self.y.select(Axis(0), indices),
            target_row_index: indices.iter().map(|&i| self.target_row_index[i]).collect(),
            target_dates: indices.iter().map(|&i| self.target_dates[i]).collect(),
        }
    }
}

/// `X[k][t][f]` is feature `f` of row `k + t`; `y[k]` is the close of row
/// `k + T`.
pub fn build_windows(scaled: &ScaledSeries, spec: &WindowSpec) -> Result<WindowedDataset, PreprocessError> {
    let t_steps = spec.time_steps;
    if t_steps == 0 {
        return Err(PreprocessError::ZeroTimeSteps);
    }
    let len = scaled.len();
    if len < t_steps + 1 {
        return Err(PreprocessError::SeriesTooShort {
            len,
            time_steps: t_steps,
        });
    }
    let features = spec.features.features();
    let n = len - t_steps;
    let x = Array3::from_shape_fn((n, t_steps, features.len()), |(k, t, f)| {
        scaled.rows[k + t][features[f].index()]
    });
    let close = Feature::Close.index();
    let y = Array1::from_shape_fn(n, |k| scaled.rows[k + t_steps][close]);
    let target_row_index: Vec<usize> = (t_steps..len).collect();
    let target_dates = scaled.dates[t_steps..].to_vec();
    Ok(WindowedDataset {
        x,
        y,
        target_row_index,
        target_dates,
    })
}

/// Partition sizes of a chronological split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Test takes the last `round(n * test_fraction)` samples; validation the
/// last `round(rest * val_fraction)` of the remainder. An empty validation
/// partition is only accepted when `val_fraction` is exactly zero.
pub fn plan_split(n: usize, test_fraction: f64, val_fraction: f64) -> Result<SplitCounts, PreprocessError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0 && (0.0..1.0).contains(&val_fraction)) {
        return Err(PreprocessError::InvalidFractions {
            test: test_fraction,
            validation: val_fraction,
        });
    }
    let test = ((n as f64 * test_fraction).round() as usize).min(n);
    let rest = n - test;
    let validation = ((rest as f64 * val_fraction).round() as usize).min(rest);
    let train = rest - validation;
    if test == 0 {
        return Err(PreprocessError::EmptyPartition("test"));
    }
    if train == 0 {
        return Err(PreprocessError::EmptyPartition("train"));
    }
    if validation == 0 && val_fraction > 0.0 {
        return Err(PreprocessError::EmptyPartition("validation"));
    }
    Ok(SplitCounts {
        train,
        validation,
        test,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: WindowedDataset,
    pub validation: WindowedDataset,
    pub test: WindowedDataset,
    pub test_fraction: f64,
    pub val_fraction: f64,
}

impl SplitDataset {
    pub fn counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.train.len(),
            validation: self.validation.len(),
            test: self.test.len(),
        }
    }
}

/// Chronological split; no shuffling.
pub fn split_windows(ds: &WindowedDataset, test_fraction: f64, val_fraction: f64) -> Result<SplitDataset, PreprocessError> {
    let counts = plan_split(ds.len(), test_fraction, val_fraction)?;
    let val_end = counts.train + counts.validation;
    Ok(SplitDataset {
        train: ds.slice(0, counts.train),
        validation: ds.slice(counts.train, val_end),
        test: ds.slice(val_end, ds.len()),
        test_fraction,
        val_fraction,
    })
}

/// Everything a training run needs from one symbol's bars.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub scaler: ScalerParams,
    pub scaled: ScaledSeries,
    pub windows: WindowedDataset,
    pub split: SplitDataset,
}

/// Plans the split first so the scaler only sees rows covered by training
/// windows and their targets.
pub fn prepare(
    series: &SymbolSeries,
    spec: &WindowSpec,
    test_fraction: f64,
    val_fraction: f64,
) -> Result<Prepared, PreprocessError> {
    if spec.time_steps == 0 {
        return Err(PreprocessError::ZeroTimeSteps);
    }
    let len = series.len();
    if len < spec.time_steps + 1 {
        return Err(PreprocessError::SeriesTooShort {
            len,
            time_steps: spec.time_steps,
        });
    }
    let counts = plan_split(len - spec.time_steps, test_fraction, val_fraction)?;
    let scaler = fit_scaler(series, counts.train + spec.time_steps)?;
    let scaled = scaler.transform(series);
    let windows = build_windows(&scaled, spec)?;
    let split = split_windows(&windows, test_fraction, val_fraction)?;
    Ok(Prepared {
        scaler,
        scaled,
        windows,
        split,
    })
}
