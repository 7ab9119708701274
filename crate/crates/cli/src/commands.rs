use std::fs;
use std::path::Path;

use serde_json::json;
use stockcast_core::charts::{render_history, render_prediction_overlay, render_price_chart, HistoryMetric, Units};
use stockcast_core::marketdata::{parse_prices, Feature, PriceTable, SymbolSeries};
use stockcast_core::modelstore::{load_model, save_model, FileCheckpoint, ModelFile, Provenance};
use stockcast_core::neural::{AdamConfig, ExtraLayer, ModelSpec};
use stockcast_core::preprocess::{build_windows, prepare, Prepared, WindowSpec};
use stockcast_core::rng::derive_seed;
use stockcast_core::trainer::{
    evaluate, predict_series, train_with_checkpoints, NoCheckpoint, TrainConfig, TrainError, TrainReport,
};
use stockcast_core::tuner::{grid_search, GridCell, GridSpec, SearchOptions, SplitTrainer, TuneError};

use crate::args::{Command, DataArgs, ExploreArgs, PipelineArgs, PredictArgs, TrainArgs, TuneArgs};
use crate::output::{sha256_hex, InputDigest, OutDir, RunManifest};
use crate::{data_err, CliError};

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Explore(a) => explore(a),
        Command::Train(a) => train(a),
        Command::Tune(a) => tune(a),
        Command::Predict(a) => predict(a),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

struct Input {
    table: PriceTable,
    digest: InputDigest,
}

fn read_prices(path: &Path) -> Result<Input, CliError> {
    let bytes = fs::read(path).map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
    let table = parse_prices(bytes.as_slice()).map_err(data_err)?;
    Ok(Input {
        table,
        digest: InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        },
    })
}

fn resolve_symbol<'a>(table: &'a PriceTable, data: &DataArgs) -> Result<&'a SymbolSeries, CliError> {
    let symbol = match &data.symbol.symbol {
        Some(s) => s.as_str(),
        None => table.pick_random_symbol(data.seed),
    };
    table.select_symbol(symbol).map_err(data_err)
}

fn data_replay(command: &str, data: &DataArgs, symbol: &str) -> Vec<String> {
    vec![
        command.to_string(),
        "--prices".into(),
        data.prices.display().to_string(),
        "--symbol".into(),
        symbol.to_string(),
        "--out".into(),
        data.out.display().to_string(),
        "--seed".into(),
        data.seed.to_string(),
    ]
}

fn explore(a: ExploreArgs) -> Result<(), CliError> {
    let input = read_prices(&a.data.prices)?;
    let series = resolve_symbol(&input.table, &a.data)?;
    let mut out = OutDir::create(&a.data.out)?;
    write_price_figures(&mut out, series)?;
    let features: serde_json::Map<String, serde_json::Value> = Feature::ALL
        .iter()
        .map(|&f| {
            let col = series.column(f);
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (f.name().to_string(), json!({ "min": min, "max": max }))
        })
        .collect();
    let summary = json!({
        "symbol": series.symbol,
        "census": input.table.census(),
        "rows": series.len(),
        "first_date": series.bars.first().map(|b| b.date.to_string()),
        "last_date": series.bars.last().map(|b| b.date.to_string()),
        "features": features,
    });
    out.write_json("summary.json", &summary)?;
    out.finish(RunManifest {
        command: "explore",
        tool_version: env!("CARGO_PKG_VERSION"),
        replay: data_replay("explore", &a.data, &series.symbol),
        symbol: series.symbol.clone(),
        seeds: json!({ "seed": a.data.seed }),
        config: json!({}),
        input: input.digest,
        outputs: Vec::new(),
    })
}

fn write_price_figures(out: &mut OutDir, series: &SymbolSeries) -> Result<(), CliError> {
    for (name, feature) in [
        ("fig1_open.svg", Feature::Open),
        ("fig2_close.svg", Feature::Close),
        ("fig3_low.svg", Feature::Low),
        ("fig4_high.svg", Feature::High),
    ] {
        let svg = render_price_chart(series, feature).map_err(data_err)?;
        out.write(name, svg.as_bytes())?;
    }
    Ok(())
}

/// Validated pipeline settings shared by `train` and `tune`.
struct Pipeline {
    window: WindowSpec,
    test_frac: f64,
    val_frac: f64,
    cfg: TrainConfig,
}

fn check_pipeline(p: &PipelineArgs) -> Result<Pipeline, CliError> {
    if !(p.test_frac > 0.0 && p.test_frac < 1.0) {
        return Err(usage(format!("--test-frac {} must lie in (0, 1)", p.test_frac)));
    }
    if !(0.0..1.0).contains(&p.val_frac) {
        return Err(usage(format!("--val-frac {} must lie in [0, 1)", p.val_frac)));
    }
    if p.val_frac == 0.0 && !p.no_early_stopping {
        return Err(usage("--val-frac 0 requires --no-early-stopping"));
    }
    if !(p.min_delta.is_finite() && p.min_delta >= 0.0) {
        return Err(usage(format!("--min-delta {} must be non-negative", p.min_delta)));
    }
    if !(p.learning_rate.is_finite() && p.learning_rate > 0.0) {
        return Err(usage(format!("--learning-rate {} must be positive", p.learning_rate)));
    }
    Ok(Pipeline {
        window: WindowSpec {
            time_steps: p.window as usize,
            features: p.features,
        },
        test_frac: p.test_frac,
        val_frac: p.val_frac,
        cfg: TrainConfig {
            max_epochs: p.max_epochs as usize,
            batch_size: 8,
            patience: (!p.no_early_stopping).then_some(p.patience as usize),
            min_delta: p.min_delta,
            shuffle_seed: 0,
            optimizer: AdamConfig {
                learning_rate: p.learning_rate,
                ..AdamConfig::default()
            },
        },
    })
}

fn pipeline_replay(p: &PipelineArgs) -> Vec<String> {
    let mut v = vec![
        "--window".into(),
        p.window.to_string(),
        "--features".into(),
        p.features.name().into(),
        "--test-frac".into(),
        p.test_frac.to_string(),
        "--val-frac".into(),
        p.val_frac.to_string(),
        "--max-epochs".into(),
        p.max_epochs.to_string(),
        "--patience".into(),
        p.patience.to_string(),
        "--min-delta".into(),
        p.min_delta.to_string(),
        "--learning-rate".into(),
        p.learning_rate.to_string(),
    ];
    if p.no_early_stopping {
        v.push("--no-early-stopping".into());
    }
    v
}

fn check_dropout(d: f64) -> Result<(), CliError> {
    if (0.0..1.0).contains(&d) {
        Ok(())
    } else {
        Err(usage(format!("--dropout {d} must lie in [0, 1)")))
    }
}

fn prepare_series(series: &SymbolSeries, p: &Pipeline) -> Result<Prepared, CliError> {
    prepare(series, &p.window, p.test_frac, p.val_frac).map_err(data_err)
}

fn train_seeds(master: u64) -> (u64, u64) {
    (derive_seed(master, 0), derive_seed(master, 1))
}

fn resolved_config(spec: &ModelSpec, window: &WindowSpec, p: &Pipeline, cfg: &TrainConfig) -> serde_json::Value {
    json!({
        "window": window.time_steps,
        "features": window.features.name(),
        "test_frac": p.test_frac,
        "val_frac": p.val_frac,
        "neurons": spec.neurons,
        "extra_layer": spec.additional_layer.name(),
        "batch": cfg.batch_size,
        "dropout": spec.dropout,
        "max_epochs": cfg.max_epochs,
        "patience": cfg.patience,
        "min_delta": cfg.min_delta,
        "optimizer": { "name": "adam", "learning_rate": cfg.optimizer.learning_rate, "beta1": cfg.optimizer.beta1, "beta2": cfg.optimizer.beta2, "epsilon": cfg.optimizer.epsilon },
        "loss": "mse",
        "weight_init": "glorot_uniform, forget_bias=1, other biases 0",
        "scaler_fit": "training segment only",
        "validation": "chronologically last fraction of training windows",
    })
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut p = check_pipeline(&a.pipeline)?;
    check_dropout(a.dropout)?;
    let input = read_prices(&a.data.prices)?;
    let series = resolve_symbol(&input.table, &a.data)?;
    let prepared = prepare_series(series, &p)?;

    let (init_seed, shuffle_seed) = train_seeds(a.data.seed);
    p.cfg.batch_size = a.batch as usize;
    p.cfg.shuffle_seed = shuffle_seed;
    let cfg = p.cfg;
    let spec = ModelSpec {
        neurons: a.neurons as usize,
        additional_layer: a.extra_layer,
        dropout: a.dropout,
        input_dim: p.window.input_dim(),
        time_steps: p.window.time_steps,
    };
    let config = resolved_config(&spec, &p.window, &p, &cfg);
    let provenance = Provenance {
        symbol: series.symbol.clone(),
        init_seed,
        shuffle_seed,
        checkpoint: false,
        epoch: None,
        config: config.clone(),
        created_at: timestamp(),
    };

    let mut out = OutDir::create(&a.data.out)?;
    let result = if a.checkpoint {
        let mut sink = FileCheckpoint {
            path: out.path("checkpoint.json"),
            spec,
            window: p.window,
            scaler: prepared.scaler.clone(),
            provenance: provenance.clone(),
        };
        train_with_checkpoints(&spec, &prepared.split, &cfg, init_seed, &mut sink)
    } else {
        train_with_checkpoints(&spec, &prepared.split, &cfg, init_seed, &mut NoCheckpoint)
    };
    let outcome = match result {
        Ok(o) => o,
        Err(TrainError::Diverged { epoch, source, report }) => {
            out.write("history.csv", report.history_csv().as_bytes())?;
            return Err(CliError::Diverged(format!("epoch {epoch}: {source}")));
        }
        Err(e) => return Err(data_err(e)),
    };
    if a.checkpoint {
        out.adopt("checkpoint.json")?;
    }
    let report = &outcome.report;
    let state = &outcome.best_state;

    let model = ModelFile {
        spec,
        window: p.window,
        scaler: prepared.scaler.clone(),
        state: state.clone(),
        provenance,
    };
    save_model(&model, out.path("model.json")).map_err(data_err)?;
    out.adopt("model.json")?;
    out.write("history.csv", report.history_csv().as_bytes())?;

    let train_m = evaluate(state, &spec, &prepared.split.train).map_err(data_err)?;
    let val_m = if prepared.split.validation.is_empty() {
        None
    } else {
        Some(evaluate(state, &spec, &prepared.split.validation).map_err(data_err)?)
    };
    let pairs = predict_series(state, &spec, &prepared.split.test, &prepared.scaler).map_err(data_err)?;
    out.write("test_predictions.csv", pairs.to_csv().as_bytes())?;
    let metrics = metrics_json(&series.symbol, series.len(), &prepared, report, train_m, val_m, &config);
    out.write_json("metrics.json", &metrics)?;

    write_price_figures(&mut out, series)?;
    write_history_figures(&mut out, report)?;
    let fig7 = render_prediction_overlay(&pairs, Units::Price).map_err(data_err)?;
    out.write("fig7_prediction.svg", fig7.as_bytes())?;

    let mut replay = data_replay("train", &a.data, &series.symbol);
    replay.extend(pipeline_replay(&a.pipeline));
    replay.extend([
        "--neurons".into(),
        a.neurons.to_string(),
        "--extra-layer".into(),
        a.extra_layer.name().into(),
        "--batch".into(),
        a.batch.to_string(),
        "--dropout".into(),
        a.dropout.to_string(),
    ]);
    if a.checkpoint {
        replay.push("--checkpoint".into());
    }
    println!(
        "{}: best epoch {} of {} ({:?}), test RMSE {}",
        series.symbol,
        report.best_epoch,
        report.stopped_epoch,
        report.stop_reason,
        report.test.map_or("n/a".to_string(), |m| format!("{:.6}", m.rmse))
    );
    out.finish(RunManifest {
        command: "train",
        tool_version: env!("CARGO_PKG_VERSION"),
        replay,
        symbol: series.symbol.clone(),
        seeds: json!({ "seed": a.data.seed, "init_seed": init_seed, "shuffle_seed": shuffle_seed }),
        config,
        input: input.digest,
        outputs: Vec::new(),
    })
}

fn write_history_figures(out: &mut OutDir, report: &TrainReport) -> Result<(), CliError> {
    let rmse = render_history(report, HistoryMetric::Rmse).map_err(data_err)?;
    out.write("fig5_rmse.svg", rmse.as_bytes())?;
    let loss = render_history(report, HistoryMetric::Loss).map_err(data_err)?;
    out.write("fig6_loss.svg", loss.as_bytes())
}

fn metrics_json(
    symbol: &str,
    rows: usize,
    prepared: &Prepared,
    report: &TrainReport,
    train_m: stockcast_core::trainer::Metrics,
    val_m: Option<stockcast_core::trainer::Metrics>,
    config: &serde_json::Value,
) -> serde_json::Value {
    json!({
        "symbol": symbol,
        "rows": rows,
        "split": prepared.split.counts(),
        "scaler": prepared.scaler,
        "best_epoch": report.best_epoch,
        "stopped_epoch": report.stopped_epoch,
        "stop_reason": report.stop_reason,
        "best_val_loss": report.best_val_loss,
        "best_val_rmse": report.best_val_loss.map(f64::sqrt),
        "train": train_m,
        "validation": val_m,
        "test": report.test,
        "config": config,
    })
}

fn parse_baseline(text: &str) -> Result<GridCell, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || usage(format!("--baseline `{text}` must look like none:16:8:0.0"));
    let [layer, neurons, batch, dropout] = parts.as_slice() else {
        return Err(bad());
    };
    let cell = GridCell {
        additional_layer: layer.parse::<ExtraLayer>().map_err(|_| bad())?,
        neurons: neurons.parse().map_err(|_| bad())?,
        batch_size: batch.parse().map_err(|_| bad())?,
        dropout: dropout.parse().map_err(|_| bad())?,
    };
    if cell.neurons == 0 || cell.batch_size == 0 || !(0.0..1.0).contains(&cell.dropout) {
        return Err(bad());
    }
    Ok(cell)
}

fn tune(a: TuneArgs) -> Result<(), CliError> {
    let p = check_pipeline(&a.pipeline)?;
    let grid = match &a.grid {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read grid {}: {e}", path.display())))?;
            GridSpec::from_json(&text).map_err(|e| usage(e.to_string()))?
        }
        None => GridSpec::default(),
    };
    let baseline = a.baseline.as_deref().map(parse_baseline).transpose()?;
    let input = read_prices(&a.data.prices)?;
    let series = resolve_symbol(&input.table, &a.data)?;
    let prepared = prepare_series(series, &p)?;
    let base_spec = ModelSpec {
        input_dim: p.window.input_dim(),
        time_steps: p.window.time_steps,
        ..ModelSpec::default()
    };
    let opts = SearchOptions {
        master_seed: a.data.seed,
        workers: a.workers as usize,
        baseline,
    };
    let trainer = SplitTrainer { split: &prepared.split };
    let outcome = match grid_search(&grid, &base_spec, &p.cfg, &opts, &trainer) {
        Ok(o) => o,
        Err(TuneError::AllConfigsDiverged) => return Err(CliError::Diverged("every grid configuration diverged".into())),
        Err(e) => return Err(data_err(e)),
    };
    let report = &outcome.report;
    let mut out = OutDir::create(&a.data.out)?;
    let config = json!({
        "grid": grid,
        "pipeline": resolved_config(&base_spec, &p.window, &p, &p.cfg),
        "baseline": report.baseline.config,
        "workers": a.workers,
    });
    out.write_json("tune_report.json", report)?;
    if let Some(state) = &outcome.winner_state {
        let w = &report.winner;
        let spec = w.config.model_spec(&base_spec);
        let model = ModelFile {
            spec,
            window: p.window,
            scaler: prepared.scaler.clone(),
            state: state.clone(),
            provenance: Provenance {
                symbol: series.symbol.clone(),
                init_seed: w.init_seed,
                shuffle_seed: w.shuffle_seed,
                checkpoint: false,
                epoch: w.best_epoch,
                config: config.clone(),
                created_at: timestamp(),
            },
        };
        save_model(&model, out.path("model.json")).map_err(data_err)?;
        out.adopt("model.json")?;
    }
    let w = &report.winner.config;
    println!(
        "{}: winner {}:{}:{}:{} of {} configs ({} diverged)",
        series.symbol, w.additional_layer, w.neurons, w.batch_size, w.dropout, report.total_configs, report.diverged
    );
    match report.improvement_line() {
        Some(line) => println!("{line}"),
        None => println!("improvement unavailable: baseline or winner has no test RMSE"),
    }
    let mut replay = data_replay("tune", &a.data, &series.symbol);
    replay.extend(pipeline_replay(&a.pipeline));
    if let Some(g) = &a.grid {
        replay.extend(["--grid".into(), g.display().to_string()]);
    }
    replay.extend(["--workers".into(), a.workers.to_string()]);
    if let Some(b) = &a.baseline {
        replay.extend(["--baseline".into(), b.clone()]);
    }
    out.finish(RunManifest {
        command: "tune",
        tool_version: env!("CARGO_PKG_VERSION"),
        replay,
        symbol: series.symbol.clone(),
        seeds: json!({ "seed": a.data.seed }),
        config,
        input: input.digest,
        outputs: Vec::new(),
    })
}

fn predict(a: PredictArgs) -> Result<(), CliError> {
    let model = load_model(&a.model).map_err(data_err)?;
    let input = read_prices(&a.prices)?;
    let symbol = a.symbol.clone().unwrap_or_else(|| model.provenance.symbol.clone());
    let series = input.table.select_symbol(&symbol).map_err(data_err)?;
    let scaled = model.scaler.transform(series);
    let windows = build_windows(&scaled, &model.window).map_err(data_err)?;
    let pairs = predict_series(&model.state, &model.spec, &windows, &model.scaler).map_err(data_err)?;
    let mut out = OutDir::create(&a.out)?;
    out.write("predictions.csv", pairs.to_csv().as_bytes())?;
    let fig = render_prediction_overlay(&pairs, Units::Price).map_err(data_err)?;
    out.write("fig7_prediction.svg", fig.as_bytes())?;
    let mut replay = vec![
        "predict".to_string(),
        "--model".into(),
        a.model.display().to_string(),
        "--prices".into(),
        a.prices.display().to_string(),
        "--out".into(),
        a.out.display().to_string(),
    ];
    if let Some(s) = &a.symbol {
        replay.extend(["--symbol".into(), s.clone()]);
    }
    let model_bytes = fs::read(&a.model).map_err(data_err)?;
    out.finish(RunManifest {
        command: "predict",
        tool_version: env!("CARGO_PKG_VERSION"),
        replay,
        symbol,
        seeds: json!({}),
        config: json!({ "model": a.model.display().to_string(), "model_sha256": sha256_hex(&model_bytes), "windows": windows.len() }),
        input: input.digest,
        outputs: Vec::new(),
    })
}
