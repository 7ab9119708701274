//! Mini-batch training with early stopping and best-weights checkpoints.

use std::fmt::Write as _;

use chrono::NaiveDate;
use ndarray::{concatenate, s, Array1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{
    adam_step, backward, forward, init_network, mse_loss, predict, AdamConfig, ModelSpec, Mode, NetworkState,
    NeuralError, OptimizerState,
};
use crate::numfmt::fmt17;
use crate::preprocess::{ScalerParams, SplitCounts, SplitDataset, WindowedDataset};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged {
        epoch: usize,
        source: NeuralError,
        report: Box<TrainReport>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// `None` disables early stopping.
    pub patience: Option<usize>,
    pub min_delta: f64,
    pub shuffle_seed: u64,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            batch_size: 8,
            patience: Some(50),
            min_delta: 0.0,
            shuffle_seed: 0,
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.max_epochs == 0 {
            return Err(TrainError::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.min_delta.is_finite() && self.min_delta >= 0.0) {
            return Err(TrainError::InvalidConfig("min_delta must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub best_loss: f64,
    /// 1-based; 0 until the first epoch is recorded.
    pub best_epoch: usize,
    pub since_improvement: usize,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        Self {
            best_loss: f64::INFINITY,
            best_epoch: 0,
            since_improvement: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    NewBest,
    Continue,
    Stop,
}

/// Improvement is strict: `val_loss < best − min_delta`. Stops once the
/// count of consecutive non-improving epochs reaches `patience`.
pub fn early_stop_update(
    st: &mut EarlyStopState,
    epoch: usize,
    val_loss: f64,
    patience: Option<usize>,
    min_delta: f64,
) -> StopDecision {
    if val_loss < st.best_loss - min_delta {
        st.best_loss = val_loss;
        st.best_epoch = epoch;
        st.since_improvement = 0;
        return StopDecision::NewBest;
    }
    st.since_improvement += 1;
    match patience {
        Some(p) if st.since_improvement >= p => StopDecision::Stop,
        _ => StopDecision::Continue,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub train_rmse: f64,
    pub val_rmse: Option<f64>,
    /// Mean mini-batch loss seen during the epoch, dropout active.
    pub running_train_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
    Diverged,
}

/// Configuration echo recorded with every report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunEcho {
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub init_seed: u64,
    pub split: SplitCounts,
    pub loss: &'static str,
    pub optimizer: &'static str,
    pub weight_init: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub stopped_epoch: usize,
    pub stop_reason: StopReason,
    pub test: Option<Metrics>,
    pub echo: Option<RunEcho>,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss,train_rmse,val_rmse`, one row per epoch.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,train_rmse,val_rmse\n");
        let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        for r in &self.history {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch,
                fmt17(r.train_loss),
                opt(r.val_loss),
                fmt17(r.train_rmse),
                opt(r.val_rmse)
            );
        }
        out
    }
}

/// Receives the weights each time validation loss improves.
pub trait CheckpointSink {
    fn save(&mut self, epoch: usize, state: &NetworkState) -> Result<(), TrainError>;
}

/// Keeps checkpoints in memory only.
pub struct NoCheckpoint;

impl CheckpointSink for NoCheckpoint {
    fn save(&mut self, _: usize, _: &NetworkState) -> Result<(), TrainError> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub best_state: NetworkState,
}

const EVAL_CHUNK: usize = 256;

fn predict_all(state: &NetworkState, spec: &ModelSpec, ds: &WindowedDataset) -> Result<Array1<f64>, NeuralError> {
    let mut parts = Vec::new();
    let mut start = 0;
    while start < ds.len() {
        let end = (start + EVAL_CHUNK).min(ds.len());
        parts.push(predict(state, spec, ds.x.slice(s![start..end, .., ..]))?);
        start = end;
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    Ok(concatenate(Axis(0), &views).expect("1-d parts"))
}

/// Eval-mode MSE and RMSE over every sample.
pub fn evaluate(state: &NetworkState, spec: &ModelSpec, ds: &WindowedDataset) -> Result<Metrics, TrainError> {
    if ds.is_empty() {
        return Err(TrainError::EmptyPartition("evaluation"));
    }
    let pred = predict_all(state, spec, ds)?;
    let loss = mse_loss(pred.view(), ds.y.view())?;
    Ok(Metrics { loss, rmse: loss.sqrt() })
}

pub fn train(spec: &ModelSpec, split: &SplitDataset, cfg: &TrainConfig, init_seed: u64) -> Result<TrainOutcome, TrainError> {
    train_with_checkpoints(spec, split, cfg, init_seed, &mut NoCheckpoint)
}

/// Each epoch shuffles the training windows, runs forward/backward/Adam per
/// mini-batch, then records eval-mode metrics on train and validation. The
/// returned weights are the snapshot from the best validation epoch.
pub fn train_with_checkpoints(
    spec: &ModelSpec,
    split: &SplitDataset,
    cfg: &TrainConfig,
    init_seed: u64,
    sink: &mut dyn CheckpointSink,
) -> Result<TrainOutcome, TrainError> {
    spec.validate()?;
    cfg.validate()?;
    let train_ds = &split.train;
    let val_ds = &split.validation;
    if train_ds.is_empty() {
        return Err(TrainError::EmptyPartition("train"));
    }
    if val_ds.is_empty() && cfg.patience.is_some() {
        return Err(TrainError::EmptyPartition("validation"));
    }
    if train_ds.input_dim() != spec.input_dim || train_ds.time_steps() != spec.time_steps {
        return Err(NeuralError::ShapeMismatch(format!(
            "windows are [{}, {}], model expects [{}, {}]",
            train_ds.time_steps(),
            train_ds.input_dim(),
            spec.time_steps,
            spec.input_dim
        ))
        .into());
    }

    let mut state = init_network(spec, init_seed)?;
    let mut opt = OptimizerState::new(&state, cfg.optimizer);
    let mut rng = SplitMix64::new(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut stop = EarlyStopState::default();
    let mut best_state = state.clone();
    let mut report = TrainReport {
        history: Vec::new(),
        best_epoch: 0,
        best_val_loss: None,
        stopped_epoch: 0,
        stop_reason: StopReason::MaxEpochs,
        test: None,
        echo: Some(RunEcho {
            spec: *spec,
            config: *cfg,
            init_seed,
            split: split.counts(),
            loss: "mse",
            optimizer: "adam",
            weight_init: "glorot_uniform, forget_bias=1",
        }),
    };

    for epoch in 1..=cfg.max_epochs {
        let step = run_epoch(spec, train_ds, &mut state, &mut opt, &mut rng, &mut order, cfg.batch_size)
            .and_then(|running| {
                let tr = evaluate(&state, spec, train_ds).map_err(neural_of)?;
                let va = if val_ds.is_empty() {
                    None
                } else {
                    Some(evaluate(&state, spec, val_ds).map_err(neural_of)?)
                };
                Ok((running, tr, va))
            });
        let (running, tr, va) = match step {
            Ok(v) => v,
            Err(source) => {
                report.stopped_epoch = epoch;
                report.stop_reason = StopReason::Diverged;
                return Err(TrainError::Diverged {
                    epoch,
                    source,
                    report: Box::new(report),
                });
            }
        };
        report.history.push(EpochRecord {
            epoch,
            train_loss: tr.loss,
            val_loss: va.map(|m| m.loss),
            train_rmse: tr.rmse,
            val_rmse: va.map(|m| m.rmse),
            running_train_loss: running,
        });
        report.stopped_epoch = epoch;
        let monitored = va.map_or(tr.loss, |m| m.loss);
        match early_stop_update(&mut stop, epoch, monitored, cfg.patience, cfg.min_delta) {
            StopDecision::NewBest => {
                best_state.clone_from(&state);
                sink.save(epoch, &best_state)?;
            }
            StopDecision::Continue => {}
            StopDecision::Stop => {
                report.stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }
    report.best_epoch = stop.best_epoch;
    report.best_val_loss = va_best(&report);
    if !split.test.is_empty() {
        report.test = Some(evaluate(&best_state, spec, &split.test)?);
    }
    Ok(TrainOutcome { report, best_state })
}

fn va_best(report: &TrainReport) -> Option<f64> {
    report
        .history
        .iter()
        .filter_map(|r| r.val_loss)
        .min_by(f64::total_cmp)
}

fn neural_of(e: TrainError) -> NeuralError {
    match e {
        TrainError::Neural(n) => n,
        other => unreachable!("evaluation of a non-empty partition failed: {other}"),
    }
}

fn run_epoch(
    spec: &ModelSpec,
    ds: &WindowedDataset,
    state: &mut NetworkState,
    opt: &mut OptimizerState,
    rng: &mut SplitMix64,
    order: &mut [usize],
    batch_size: usize,
) -> Result<f64, NeuralError> {
    rng.shuffle(order);
    let mut total = 0.0;
    for chunk in order.chunks(batch_size) {
        let xb = ds.x.select(Axis(0), chunk);
        let yb = ds.y.select(Axis(0), chunk);
        let dropout_seed = rng.next_u64();
        let (pred, cache) = forward(state, spec, xb.view(), Mode::Train { dropout_seed })?;
        total += mse_loss(pred.view(), yb.view())? * chunk.len() as f64;
        let grads = backward(state, &cache, pred.view(), yb.view())?;
        adam_step(opt, state, &grads)?;
    }
    Ok(total / ds.len() as f64)
}

/// Actual and predicted next-day closes, aligned by target row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSeries {
    pub dates: Vec<NaiveDate>,
    pub target_row_index: Vec<usize>,
    pub scaled_actual: Vec<f64>,
    pub scaled_predicted: Vec<f64>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl PredictionSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// `date,actual_close,predicted_close,scaled_actual,scaled_predicted`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,actual_close,predicted_close,scaled_actual,scaled_predicted\n");
        for k in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.dates[k],
                fmt17(self.actual[k]),
                fmt17(self.predicted[k]),
                fmt17(self.scaled_actual[k]),
                fmt17(self.scaled_predicted[k])
            );
        }
        out
    }
}

pub fn predict_series(
    state: &NetworkState,
    spec: &ModelSpec,
    ds: &WindowedDataset,
    scaler: &ScalerParams,
) -> Result<PredictionSeries, TrainError> {
    if ds.is_empty() {
        return Err(TrainError::EmptyPartition("prediction"));
    }
    let pred = predict_all(state, spec, ds)?;
    let scaled_actual = ds.y.to_vec();
    let scaled_predicted = pred.to_vec();
    Ok(PredictionSeries {
        dates: ds.target_dates.clone(),
        target_row_index: ds.target_row_index.clone(),
        actual: scaled_actual.iter().map(|&v| scaler.inverse_target(v)).collect(),
        predicted: scaled_predicted.iter().map(|&v| scaler.inverse_target(v)).collect(),
        scaled_actual,
        scaled_predicted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_state_takes_any_loss() {
        let mut st = EarlyStopState::default();
        assert_eq!(early_stop_update(&mut st, 1, 123.0, Some(5), 0.0), StopDecision::NewBest);
        assert_eq!(st.best_epoch, 1);
    }

    #[test]
    fn tie_is_not_improvement() {
        let mut st = EarlyStopState { best_loss: 0.5, best_epoch: 3, since_improvement: 0 };
        assert_eq!(early_stop_update(&mut st, 4, 0.5, Some(5), 0.0), StopDecision::Continue);
        assert_eq!(st.since_improvement, 1);
        assert_eq!(st.best_epoch, 3);
    }

    #[test]
    fn min_delta_requires_margin() {
        let mut st = EarlyStopState { best_loss: 0.5, best_epoch: 1, since_improvement: 0 };
        assert_eq!(early_stop_update(&mut st, 2, 0.495, Some(5), 0.01), StopDecision::Continue);
        assert_eq!(early_stop_update(&mut st, 3, 0.485, Some(5), 0.01), StopDecision::NewBest);
    }

    #[test]
    fn zero_patience_stops_on_first_miss() {
        let mut st = EarlyStopState::default();
        early_stop_update(&mut st, 1, 1.0, Some(0), 0.0);
        assert_eq!(early_stop_update(&mut st, 2, 1.0, Some(0), 0.0), StopDecision::Stop);
    }

    #[test]
    fn scripted_sequence() {
        let losses = [1.0, 0.9, 0.95, 0.94, 0.96];
        let mut st = EarlyStopState::default();
        let mut stopped = None;
        for (i, &l) in losses.iter().enumerate() {
            if early_stop_update(&mut st, i + 1, l, Some(2), 0.0) == StopDecision::Stop {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(4));
        assert_eq!(st.best_epoch, 2);
    }

    #[test]
    fn disabled_patience_never_stops() {
        let mut st = EarlyStopState::default();
        early_stop_update(&mut st, 1, 0.1, None, 0.0);
        for e in 2..500 {
            assert_eq!(early_stop_update(&mut st, e, 1.0, None, 0.0), StopDecision::Continue);
        }
    }
}
