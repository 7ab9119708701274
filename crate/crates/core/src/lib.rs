//! Stock time-series forecasting: NYSE OHLCV ingestion, min-max scaling,
//! lookback windows, from-scratch LSTM/GRU regression, early-stopped
//! training, grid search, model persistence and SVG figures.

pub mod marketdata;
pub mod neural;
pub mod preprocess;
pub mod rng;
pub mod numfmt;
pub mod trainer;
pub mod tuner;
pub mod modelstore;
pub mod charts;
pub mod synthetic;
