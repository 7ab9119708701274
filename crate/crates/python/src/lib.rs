use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stockcast_core::charts::{render_history, render_prediction_overlay, render_price_chart, HistoryMetric, Units};
use stockcast_core::marketdata::{parse_prices, Feature, PriceTable as CoreTable};
use stockcast_core::modelstore::{load_model, save_model, ModelFile, Provenance};
use stockcast_core::neural::{ExtraLayer, ModelSpec};
use stockcast_core::preprocess::{prepare, FeatureSet, Prepared, WindowSpec};
use stockcast_core::rng::derive_seed;
use stockcast_core::synthetic;
use stockcast_core::trainer::{evaluate, predict_series, train as core_train, TrainConfig, TrainReport};
use stockcast_core::tuner;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_feature(name: &str) -> PyResult<Feature> {
    Feature::ALL
        .into_iter()
        .find(|f| f.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| PyValueError::new_err(format!("unknown feature `{name}`")))
}

/// Daily bars grouped by symbol.
#[pyclass(module = "stockcast", frozen)]
pub struct PriceTable {
    inner: CoreTable,
}

#[pymethods]
impl PriceTable {
    #[staticmethod]
    fn from_path(path: &str) -> PyResult<Self> {
        let inner = CoreTable::from_path(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_prices(text.as_bytes()).map_err(value_err)?,
        })
    }

    #[getter]
    fn census(&self) -> usize {
        self.inner.census()
    }

    #[getter]
    fn row_count(&self) -> usize {
        self.inner.row_count()
    }

    fn symbols(&self) -> Vec<String> {
        self.inner.list_symbols()
    }

    fn pick_random_symbol(&self, seed: u64) -> String {
        self.inner.pick_random_symbol(seed).to_string()
    }

    /// One column as `(iso_dates, values)`.
    fn column(&self, symbol: &str, feature: &str) -> PyResult<(Vec<String>, Vec<f64>)> {
        let s = self.inner.select_symbol(symbol).map_err(value_err)?;
        let dates = s.dates().iter().map(|d| d.to_string()).collect();
        Ok((dates, s.column(parse_feature(feature)?)))
    }

    fn price_chart_svg(&self, symbol: &str, feature: &str) -> PyResult<String> {
        let s = self.inner.select_symbol(symbol).map_err(value_err)?;
        render_price_chart(s, parse_feature(feature)?).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.census()
    }

    fn __repr__(&self) -> String {
        format!("PriceTable(symbols={}, rows={})", self.inner.census(), self.inner.row_count())
    }
}

/// Scaled, windowed and chronologically split series.
#[pyclass(module = "stockcast", frozen)]
pub struct Dataset {
    symbol: String,
    window: WindowSpec,
    inner: Prepared,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (table, symbol, window = 25, features = "ohlcv", test_frac = 0.2, val_frac = 0.3))]
    fn prepare(
        table: &PriceTable,
        symbol: &str,
        window: usize,
        features: &str,
        test_frac: f64,
        val_frac: f64,
    ) -> PyResult<Self> {
        let series = table.inner.select_symbol(symbol).map_err(value_err)?;
        let spec = WindowSpec {
            time_steps: window,
            features: features.parse::<FeatureSet>().map_err(value_err)?,
        };
        let inner = prepare(series, &spec, test_frac, val_frac).map_err(value_err)?;
        Ok(Self {
            symbol: symbol.to_string(),
            window: spec,
            inner,
        })
    }

    #[getter]
    fn symbol(&self) -> &str {
        &self.symbol
    }

    /// `(train, validation, test)` window counts.
    #[getter]
    fn counts(&self) -> (usize, usize, usize) {
        let c = self.inner.split.counts();
        (c.train, c.validation, c.test)
    }

    #[getter]
    fn scaler_min(&self) -> Vec<f64> {
        self.inner.scaler.min.to_vec()
    }

    #[getter]
    fn scaler_max(&self) -> Vec<f64> {
        self.inner.scaler.max.to_vec()
    }

    fn scale(&self, feature: &str, value: f64) -> PyResult<f64> {
        Ok(self.inner.scaler.scale(parse_feature(feature)?, value))
    }

    fn unscale(&self, feature: &str, value: f64) -> PyResult<f64> {
        Ok(self.inner.scaler.unscale(parse_feature(feature)?, value))
    }

    /// Training windows as nested lists `[N][T][D]` plus targets.
    fn train_windows(&self) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
        let ds = &self.inner.split.train;
        let x = ds
            .x
            .outer_iter()
            .map(|w| w.outer_iter().map(|row| row.to_vec()).collect())
            .collect();
        (x, ds.y.to_vec())
    }
}

/// A trained network with its scaler and training history.
#[pyclass(module = "stockcast", frozen)]
pub struct Model {
    file: ModelFile,
    report: Option<TrainReport>,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = load_model(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { file, report: None })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(&self.file, path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.file.spec.parameter_count()
    }

    #[getter]
    fn best_epoch(&self) -> Option<usize> {
        self.report.as_ref().map(|r| r.best_epoch)
    }

    #[getter]
    fn stopped_epoch(&self) -> Option<usize> {
        self.report.as_ref().map(|r| r.stopped_epoch)
    }

    #[getter]
    fn test_rmse(&self) -> Option<f64> {
        self.report.as_ref().and_then(|r| r.test).map(|m| m.rmse)
    }

    /// Per-epoch records as dicts; empty for a loaded model.
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let Some(r) = &self.report else { return Ok(Vec::new()) };
        r.history
            .iter()
            .map(|h| {
                let d = PyDict::new(py);
                d.set_item("epoch", h.epoch)?;
                d.set_item("train_loss", h.train_loss)?;
                d.set_item("val_loss", h.val_loss)?;
                d.set_item("train_rmse", h.train_rmse)?;
                d.set_item("val_rmse", h.val_rmse)?;
                Ok(d)
            })
            .collect()
    }

    fn history_csv(&self) -> Option<String> {
        self.report.as_ref().map(TrainReport::history_csv)
    }

    fn history_svg(&self, metric: &str) -> PyResult<String> {
        let r = self.report.as_ref().ok_or_else(|| PyValueError::new_err("no training history"))?;
        let metric = match metric {
            "loss" => HistoryMetric::Loss,
            "rmse" => HistoryMetric::Rmse,
            other => return Err(PyValueError::new_err(format!("metric `{other}` is not loss or rmse"))),
        };
        render_history(r, metric).map_err(value_err)
    }

    /// Test-partition RMSE in scaled units.
    fn evaluate(&self, data: &Dataset) -> PyResult<f64> {
        let m = evaluate(&self.file.state, &self.file.spec, &data.inner.split.test).map_err(value_err)?;
        Ok(m.rmse)
    }

    /// Test-partition `(dates, actual, predicted)` closes in price units.
    fn predict_test(&self, data: &Dataset) -> PyResult<(Vec<String>, Vec<f64>, Vec<f64>)> {
        let p = predict_series(&self.file.state, &self.file.spec, &data.inner.split.test, &self.file.scaler)
            .map_err(value_err)?;
        Ok((p.dates.iter().map(|d| d.to_string()).collect(), p.actual, p.predicted))
    }

    fn prediction_svg(&self, data: &Dataset) -> PyResult<String> {
        let p = predict_series(&self.file.state, &self.file.spec, &data.inner.split.test, &self.file.scaler)
            .map_err(value_err)?;
        render_prediction_overlay(&p, Units::Price).map_err(value_err)
    }
}

/// Trains one model; seeds derive from `seed` exactly as the CLI does.
#[pyfunction]
#[pyo3(signature = (data, neurons = 16, extra_layer = "none", dropout = 0.2, batch_size = 8, max_epochs = 200, patience = Some(50), learning_rate = 1e-3, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: &Dataset,
    neurons: usize,
    extra_layer: &str,
    dropout: f64,
    batch_size: usize,
    max_epochs: usize,
    patience: Option<usize>,
    learning_rate: f64,
    seed: u64,
) -> PyResult<Model> {
    let spec = ModelSpec {
        neurons,
        additional_layer: extra_layer.parse::<ExtraLayer>().map_err(value_err)?,
        dropout,
        input_dim: data.window.input_dim(),
        time_steps: data.window.time_steps,
    };
    let (init_seed, shuffle_seed) = (derive_seed(seed, 0), derive_seed(seed, 1));
    let mut cfg = TrainConfig {
        max_epochs,
        batch_size,
        patience,
        shuffle_seed,
        ..TrainConfig::default()
    };
    cfg.optimizer.learning_rate = learning_rate;
    let outcome = py
        .detach(|| core_train(&spec, &data.inner.split, &cfg, init_seed))
        .map_err(value_err)?;
    let file = ModelFile {
        spec,
        window: data.window,
        scaler: data.inner.scaler.clone(),
        state: outcome.best_state,
        provenance: Provenance {
            symbol: data.symbol.clone(),
            init_seed,
            shuffle_seed,
            checkpoint: false,
            epoch: Some(outcome.report.best_epoch),
            config: serde_json::json!({ "neurons": neurons, "extra_layer": extra_layer, "dropout": dropout, "batch": batch_size }),
            created_at: String::new(),
        },
    };
    Ok(Model {
        file,
        report: Some(outcome.report),
    })
}

#[pyfunction]
fn improvement(baseline_rmse: f64, tuned_rmse: f64) -> PyResult<f64> {
    tuner::improvement(baseline_rmse, tuned_rmse).map_err(value_err)
}

#[pyfunction]
fn improvement_line(baseline_rmse: f64, tuned_rmse: f64) -> String {
    tuner::improvement_line(baseline_rmse, tuned_rmse)
}

#[pyfunction]
fn rmse(predicted: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    stockcast_core::neural::rmse((&predicted[..]).into(), (&actual[..]).into()).map_err(value_err)
}

/// `prices.csv` text for a noisy sine around a level of 100.
#[pyfunction]
#[pyo3(signature = (symbol, length, period = 50.0, noise_fraction = 0.02, seed = 0))]
fn noisy_sine_csv(symbol: &str, length: usize, period: f64, noise_fraction: f64, seed: u64) -> String {
    synthetic::to_prices_csv([&synthetic::noisy_sine(symbol, length, period, noise_fraction, seed)])
}

#[pymodule]
fn stockcast(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PriceTable>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(improvement, m)?)?;
    m.add_function(wrap_pyfunction!(improvement_line, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(noisy_sine_csv, m)?)?;
    m.add("REFERENCE_IMPROVEMENT_PERCENT", tuner::REFERENCE_IMPROVEMENT_PERCENT)?;
    Ok(())
}
