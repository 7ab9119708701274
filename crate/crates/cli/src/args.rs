use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stockcast_core::neural::ExtraLayer;
use stockcast_core::preprocess::FeatureSet;

#[derive(Debug, Parser)]
#[command(name = "stockcast", version, about = "Recurrent stock price forecasting from NYSE daily bars")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price line charts and a summary of one symbol.
    Explore(ExploreArgs),
    /// Train one model and emit its history, metrics and figures.
    Train(TrainArgs),
    /// Grid search over layer stack, width, batch size and dropout.
    Tune(TuneArgs),
    /// Predict every window of a symbol with a saved model.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SymbolArgs {
    /// Ticker to model.
    #[arg(long, conflicts_with = "random_symbol", required_unless_present = "random_symbol")]
    pub symbol: Option<String>,
    /// Pick a symbol from the file with the seeded generator.
    #[arg(long)]
    pub random_symbol: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Path to prices.csv.
    #[arg(long)]
    pub prices: PathBuf,
    #[command(flatten)]
    pub symbol: SymbolArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed for every random choice.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Lookback window in days.
    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
    pub window: u64,
    /// Model inputs: ohlcv or cv (close and volume).
    #[arg(long, default_value = "ohlcv")]
    pub features: FeatureSet,
    #[arg(long, default_value_t = 0.2)]
    pub test_frac: f64,
    #[arg(long, default_value_t = 0.30)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_epochs: u64,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 50)]
    pub patience: u64,
    #[arg(long)]
    pub no_early_stopping: bool,
    #[arg(long, default_value_t = 0.0)]
    pub min_delta: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub neurons: u64,
    /// Second recurrent layer: none, lstm or gru.
    #[arg(long, default_value = "none")]
    pub extra_layer: ExtraLayer,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    /// Mirror every new best snapshot to checkpoint.json.
    #[arg(long)]
    pub checkpoint: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Grid file; the built-in 81-cell grid when omitted.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Concurrent trainings.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    /// Baseline as LAYER:NEURONS:BATCH:DROPOUT, e.g. none:16:8:0.
    #[arg(long)]
    pub baseline: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the symbol recorded in the model file.
    #[arg(long)]
    pub symbol: Option<String>,
}
