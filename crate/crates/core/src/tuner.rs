//! Exhaustive grid search over layer stack, width, batch size and dropout.
//!
//! Every cell trains with seeds derived from the master seed and the cell's
//! position in the canonical (sorted) grid, so results do not depend on the
//! order lists are written in, on the worker count, or on completion order.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{ExtraLayer, ModelSpec, NetworkState};
use crate::preprocess::SplitDataset;
use crate::rng::derive_seed;
use crate::trainer::{train, StopReason, TrainConfig, TrainError};

/// Test RMSEs reported for the untuned and tuned models on the NYSE data.
pub const REFERENCE_BASELINE_RMSE: f64 = 0.0597;
pub const REFERENCE_TUNED_RMSE: f64 = 0.0282;
pub const REFERENCE_IMPROVEMENT_PERCENT: f64 = 53.0;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("every grid configuration diverged")]
    AllConfigsDiverged,
    #[error("baseline RMSE must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("grid file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub additional_layer: Vec<ExtraLayer>,
    pub neurons: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub dropout: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            additional_layer: vec![ExtraLayer::None, ExtraLayer::Lstm, ExtraLayer::Gru],
            neurons: vec![16, 32, 64],
            batch_size: vec![8, 16, 32],
            dropout: vec![0.0, 0.2, 0.4],
        }
    }
}

impl GridSpec {
    pub fn from_json(text: &str) -> Result<Self, TuneError> {
        let grid: GridSpec = serde_json::from_str(text)?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), TuneError> {
        let bad = |m: &str| Err(TuneError::InvalidGrid(m.to_string()));
        if self.additional_layer.is_empty() || self.neurons.is_empty() || self.batch_size.is_empty() || self.dropout.is_empty() {
            return bad("every candidate list must be non-empty");
        }
        if self.neurons.contains(&0) {
            return bad("neurons must be at least 1");
        }
        if self.batch_size.contains(&0) {
            return bad("batch_size must be at least 1");
        }
        if self.dropout.iter().any(|d| !(0.0..1.0).contains(d)) {
            return bad("dropout values must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.additional_layer.len() * self.neurons.len() * self.batch_size.len() * self.dropout.len()
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub additional_layer: ExtraLayer,
    pub neurons: usize,
    pub batch_size: usize,
    pub dropout: f64,
}

impl GridCell {
    pub fn model_spec(&self, base: &ModelSpec) -> ModelSpec {
        ModelSpec {
            neurons: self.neurons,
            additional_layer: self.additional_layer,
            dropout: self.dropout,
            ..*base
        }
    }

    pub fn train_config(&self, base: &TrainConfig, shuffle_seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            shuffle_seed,
            ..*base
        }
    }
}

/// A cell with its enumeration position and the canonical position its
/// seeds derive from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumeratedCell {
    pub index: usize,
    pub canonical_index: usize,
    pub cell: GridCell,
}

fn canonical_position<T: Copy>(values: &[T], v: T, cmp: impl Fn(&T, &T) -> Ordering) -> (usize, usize) {
    let mut sorted = values.to_vec();
    sorted.sort_by(&cmp);
    sorted.dedup_by(|a, b| cmp(a, b) == Ordering::Equal);
    let pos = sorted.iter().position(|x| cmp(x, &v) == Ordering::Equal).expect("value drawn from list");
    (pos, sorted.len())
}

/// Cartesian product, nested as layer → neurons → batch size → dropout.
pub fn enumerate_grid(grid: &GridSpec) -> Vec<EnumeratedCell> {
    let mut out = Vec::with_capacity(grid.size());
    for &additional_layer in &grid.additional_layer {
        for &neurons in &grid.neurons {
            for &batch_size in &grid.batch_size {
                for &dropout in &grid.dropout {
                    let cell = GridCell {
                        additional_layer,
                        neurons,
                        batch_size,
                        dropout,
                    };
                    out.push(EnumeratedCell {
                        index: out.len(),
                        canonical_index: canonical_index(grid, &cell),
                        cell,
                    });
                }
            }
        }
    }
    out
}

/// Mixed-radix position of `cell` in the grid with every list sorted and
/// deduplicated.
pub fn canonical_index(grid: &GridSpec, cell: &GridCell) -> usize {
    let parts = [
        canonical_position(&grid.additional_layer, cell.additional_layer, Ord::cmp),
        canonical_position(&grid.neurons, cell.neurons, Ord::cmp),
        canonical_position(&grid.batch_size, cell.batch_size, Ord::cmp),
        canonical_position(&grid.dropout, cell.dropout, f64::total_cmp),
    ];
    parts.iter().fold(0, |acc, &(pos, radix)| acc * radix + pos)
}

/// Seeds for `(init, shuffle)` of one training run.
pub fn cell_seeds(master: u64, canonical_index: u64) -> (u64, u64) {
    let s = derive_seed(master, canonical_index);
    (derive_seed(s, 0), derive_seed(s, 1))
}

/// Outcome of training one configuration.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub best_val_rmse: f64,
    pub test_rmse: Option<f64>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub stop_reason: StopReason,
    pub state: Option<NetworkState>,
}

/// Trains one configuration. Implementations must be pure functions of
/// their arguments for the report to be schedule-independent.
pub trait CellTrainer: Sync {
    fn train_cell(&self, spec: &ModelSpec, cfg: &TrainConfig, init_seed: u64) -> Result<CellRun, TrainError>;
}

/// Trains on a prepared split.
pub struct SplitTrainer<'a> {
    pub split: &'a SplitDataset,
}

impl CellTrainer for SplitTrainer<'_> {
    fn train_cell(&self, spec: &ModelSpec, cfg: &TrainConfig, init_seed: u64) -> Result<CellRun, TrainError> {
        let outcome = train(spec, self.split, cfg, init_seed)?;
        let r = &outcome.report;
        let best_val_loss = r
            .best_val_loss
            .ok_or(TrainError::EmptyPartition("validation"))?;
        Ok(CellRun {
            best_val_rmse: best_val_loss.sqrt(),
            test_rmse: r.test.map(|m| m.rmse),
            best_epoch: r.best_epoch,
            stopped_epoch: r.stopped_epoch,
            stop_reason: r.stop_reason,
            state: Some(outcome.best_state),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Completed,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigResult {
    pub index: usize,
    pub canonical_index: usize,
    #[serde(flatten)]
    pub config: GridCell,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub status: CellStatus,
    pub best_val_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    pub best_epoch: Option<usize>,
    pub stop_reason: StopReason,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineResult {
    #[serde(flatten)]
    pub config: GridCell,
    /// Grid cell whose run was reused, when the baseline is a grid member.
    pub grid_index: Option<usize>,
    pub status: CellStatus,
    pub best_val_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneReport {
    pub master_seed: u64,
    pub total_configs: usize,
    pub completed: usize,
    pub diverged: usize,
    pub selection_metric: &'static str,
    pub results: Vec<ConfigResult>,
    pub winner: ConfigResult,
    pub baseline: BaselineResult,
    /// Test-RMSE improvement of the winner over the baseline, percent.
    pub improvement_percent: Option<f64>,
    pub reference_improvement_percent: f64,
}

impl TuneReport {
    pub fn improvement_line(&self) -> Option<String> {
        Some(improvement_line(self.baseline.test_rmse?, self.winner.test_rmse?))
    }
}

pub struct TuneOutcome {
    pub report: TuneReport,
    pub winner_state: Option<NetworkState>,
}

/// `100 · (baseline − tuned) / baseline`.
pub fn improvement(baseline_rmse: f64, tuned_rmse: f64) -> Result<f64, TuneError> {
    if baseline_rmse.is_nan() || baseline_rmse <= 0.0 {
        return Err(TuneError::NonPositiveBaseline(baseline_rmse));
    }
    Ok(100.0 * (baseline_rmse - tuned_rmse) / baseline_rmse)
}

/// Human-readable comparison with the reference 53% figure.
pub fn improvement_line(baseline_rmse: f64, tuned_rmse: f64) -> String {
    let mut line = format!("test RMSE {baseline_rmse:.4} -> {tuned_rmse:.4}: ");
    match improvement(baseline_rmse, tuned_rmse) {
        Ok(p) => {
            let _ = write!(line, "{p:.2}% improvement (≈{:.0}%)", p.round());
        }
        Err(e) => line.push_str(&e.to_string()),
    }
    let _ = write!(
        line,
        "; reference {REFERENCE_BASELINE_RMSE} -> {REFERENCE_TUNED_RMSE}: {REFERENCE_IMPROVEMENT_PERCENT:.1}%"
    );
    line
}

/// Default baseline: the first enumerated cell with no extra layer and no
/// dropout.
pub fn default_baseline(grid: &GridSpec) -> GridCell {
    GridCell {
        additional_layer: ExtraLayer::None,
        neurons: grid.neurons[0],
        batch_size: grid.batch_size[0],
        dropout: 0.0,
    }
}

pub struct SearchOptions {
    pub master_seed: u64,
    pub workers: usize,
    pub baseline: Option<GridCell>,
}

/// Trains every cell, picks the minimal validation RMSE (earliest index on
/// ties; diverged cells excluded) and trains or reuses the baseline.
pub fn grid_search(
    grid: &GridSpec,
    base_spec: &ModelSpec,
    base_cfg: &TrainConfig,
    opts: &SearchOptions,
    trainer: &dyn CellTrainer,
) -> Result<TuneOutcome, TuneError> {
    grid.validate()?;
    let cells = enumerate_grid(grid);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| TuneError::Pool(e.to_string()))?;
    let run_cell = |ec: &EnumeratedCell| {
        let (init_seed, shuffle_seed) = cell_seeds(opts.master_seed, ec.canonical_index as u64);
        let spec = ec.cell.model_spec(base_spec);
        let cfg = ec.cell.train_config(base_cfg, shuffle_seed);
        (init_seed, shuffle_seed, trainer.train_cell(&spec, &cfg, init_seed))
    };
    let runs: Vec<_> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let mut results = Vec::with_capacity(cells.len());
    let mut states = Vec::with_capacity(cells.len());
    for (ec, (init_seed, shuffle_seed, run)) in cells.iter().zip(runs) {
        let (result, state) = to_result(ec, init_seed, shuffle_seed, run);
        results.push(result);
        states.push(state);
    }

    let winner_index = select_winner(&results).ok_or(TuneError::AllConfigsDiverged)?;
    let winner = results[winner_index].clone();
    let winner_state = states[winner_index].take();

    let baseline_cell = opts.baseline.unwrap_or_else(|| default_baseline(grid));
    let baseline = match results.iter().find(|r| r.config == baseline_cell) {
        Some(r) => BaselineResult {
            config: baseline_cell,
            grid_index: Some(r.index),
            status: r.status,
            best_val_rmse: r.best_val_rmse,
            test_rmse: r.test_rmse,
        },
        None => {
            let (init_seed, shuffle_seed) = cell_seeds(opts.master_seed, u64::MAX);
            let spec = baseline_cell.model_spec(base_spec);
            let cfg = baseline_cell.train_config(base_cfg, shuffle_seed);
            match trainer.train_cell(&spec, &cfg, init_seed) {
                Ok(run) => BaselineResult {
                    config: baseline_cell,
                    grid_index: None,
                    status: CellStatus::Completed,
                    best_val_rmse: Some(run.best_val_rmse),
                    test_rmse: run.test_rmse,
                },
                Err(_) => BaselineResult {
                    config: baseline_cell,
                    grid_index: None,
                    status: CellStatus::Diverged,
                    best_val_rmse: None,
                    test_rmse: None,
                },
            }
        }
    };
    let improvement_percent = match (baseline.test_rmse, winner.test_rmse) {
        (Some(b), Some(w)) => improvement(b, w).ok(),
        _ => None,
    };
    let diverged = results.iter().filter(|r| r.status == CellStatus::Diverged).count();
    let report = TuneReport {
        master_seed: opts.master_seed,
        total_configs: cells.len(),
        completed: results.len() - diverged,
        diverged,
        selection_metric: "validation_rmse",
        results,
        winner,
        baseline,
        improvement_percent,
        reference_improvement_percent: REFERENCE_IMPROVEMENT_PERCENT,
    };
    Ok(TuneOutcome { report, winner_state })
}

fn to_result(
    ec: &EnumeratedCell,
    init_seed: u64,
    shuffle_seed: u64,
    run: Result<CellRun, TrainError>,
) -> (ConfigResult, Option<NetworkState>) {
    let base = ConfigResult {
        index: ec.index,
        canonical_index: ec.canonical_index,
        config: ec.cell,
        init_seed,
        shuffle_seed,
        status: CellStatus::Completed,
        best_val_rmse: None,
        test_rmse: None,
        best_epoch: None,
        stop_reason: StopReason::Diverged,
        error: None,
    };
    match run {
        Ok(run) if run.best_val_rmse.is_finite() => (
            ConfigResult {
                best_val_rmse: Some(run.best_val_rmse),
                test_rmse: run.test_rmse,
                best_epoch: Some(run.best_epoch),
                stop_reason: run.stop_reason,
                ..base
            },
            run.state,
        ),
        Ok(_) => (
            ConfigResult {
                status: CellStatus::Diverged,
                error: Some("non-finite validation RMSE".into()),
                ..base
            },
            None,
        ),
        Err(e) => (
            ConfigResult {
                status: CellStatus::Diverged,
                error: Some(e.to_string()),
                ..base
            },
            None,
        ),
    }
}

/// Index of the completed result with minimal validation RMSE; the first
/// one wins ties.
pub fn select_winner(results: &[ConfigResult]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if r.status != CellStatus::Completed {
            continue;
        }
        let Some(v) = r.best_val_rmse else { continue };
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}
