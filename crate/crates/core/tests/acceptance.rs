//! Acceptance suite: one pass/fail line per criterion, printed by
//! `cargo test -p stockcast-core --test acceptance`.
//!
//! Criterion 9 needs real NYSE prices; point `STOCKCAST_NYSE_PRICES` at a
//! `prices.csv` to run it; otherwise it is reported as SKIP and a synthetic
//! random-walk proxy runs instead. `STOCKCAST_BLESS=1` rewrites the golden SVGs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use ndarray::{Array1, Array3};
use stockcast_core::charts::{render_history, render_prediction_overlay, render_price_chart, HistoryMetric, Units};
use stockcast_core::marketdata::{Feature, PriceBar, PriceTable, SymbolSeries};
use stockcast_core::modelstore::{from_json, load_model, save_model, to_json, ModelFile, Provenance};
use stockcast_core::neural::gru::gru_cell_forward;
use stockcast_core::neural::lstm::lstm_cell_forward;
use stockcast_core::neural::{
    backward, forward, init_network, max_relative_error, numeric_gradient, CellKind, ExtraLayer, ModelSpec, Mode,
    RecurrentWeights,
};
use stockcast_core::preprocess::{build_windows, fit_scaler, prepare, FeatureSet, PreprocessError, WindowSpec};
use stockcast_core::rng::SplitMix64;
use stockcast_core::synthetic::{noisy_sine, random_walk};
use stockcast_core::trainer::{
    early_stop_update, evaluate, predict_series, train, EarlyStopState, EpochRecord, PredictionSeries, StopDecision,
    StopReason, TrainConfig, TrainError, TrainReport,
};
use stockcast_core::tuner::{
    enumerate_grid, grid_search, improvement, improvement_line, CellRun, CellTrainer, GridCell, GridSpec,
    SearchOptions, SplitTrainer,
};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

enum Verdict {
    Pass,
    Fail,
    Skip,
}

fn report(id: u32, name: &str, started: Instant, check: Check) -> Verdict {
    let secs = started.elapsed().as_secs_f64();
    match check {
        Ok(detail) if detail.starts_with("SKIP") => {
            println!("[SKIP] {id:>2} {name}: {detail} ({secs:.2}s)");
            Verdict::Skip
        }
        Ok(detail) => {
            println!("[PASS] {id:>2} {name}: {detail} ({secs:.2}s)");
            Verdict::Pass
        }
        Err(why) => {
            println!("[FAIL] {id:>2} {name}: {why} ({secs:.2}s)");
            Verdict::Fail
        }
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 12] = [
        (1, "improvement arithmetic", c01_improvement),
        (2, "gradient oracle", c02_gradients),
        (3, "cell fixtures", c03_fixtures),
        (4, "scaler", c04_scaler),
        (5, "windowing", c05_windows),
        (6, "early stopping", c06_early_stopping),
        (7, "determinism", c07_determinism),
        (8, "synthetic convergence", c08_convergence),
        (9, "directional reproduction", c09_nyse),
        (10, "persistence", c10_persistence),
        (11, "figures", c11_figures),
        (12, "grid enumeration", c12_grid),
    ];
    let mut failed = Vec::new();
    let mut skipped = 0;
    for (id, name, f) in criteria {
        match report(id, name, Instant::now(), f()) {
            Verdict::Pass => {}
            Verdict::Skip => skipped += 1,
            Verdict::Fail => failed.push(id),
        }
    }
    println!("acceptance: {} passed, {} failed, {skipped} skipped", 12 - failed.len() - skipped, failed.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn c01_improvement() -> Check {
    let p = improvement(0.0597, 0.0282).map_err(|e| e.to_string())?;
    ensure!((p - 52.76).abs() <= 0.01, "improvement {p}");
    let line = improvement_line(0.0597, 0.0282);
    ensure!(line.contains("52.76%") && line.contains("≈53%") && line.contains("53.0%"), "line: {line}");
    ensure!(improvement(0.0, 0.1).is_err(), "zero baseline accepted");
    Ok(line)
}

fn c02_gradients() -> Check {
    const H: [usize; 3] = [1, 2, 3];
    const T: [usize; 3] = [1, 2, 5];
    const D: [usize; 3] = [1, 2, 5];
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for (label, layer) in [("lstm", ExtraLayer::None), ("gru", ExtraLayer::Gru)] {
        for seed in 0..10u64 {
            let mut rng = SplitMix64::new(1000 + seed);
            let spec = ModelSpec {
                neurons: H[rng.below(3)],
                time_steps: T[rng.below(3)],
                input_dim: D[rng.below(3)],
                additional_layer: layer,
                dropout: 0.0,
            };
            let state = init_network(&spec, seed).map_err(|e| e.to_string())?;
            let b = 3;
            let x = Array3::from_shape_simple_fn((b, spec.time_steps, spec.input_dim), || rng.symmetric(1.0));
            let y = Array1::from_shape_simple_fn(b, || rng.symmetric(1.0));
            let (pred, cache) = forward(&state, &spec, x.view(), Mode::Eval).map_err(|e| e.to_string())?;
            let a = backward(&state, &cache, pred.view(), y.view()).map_err(|e| e.to_string())?;
            let n = numeric_gradient(&state, &spec, x.view(), y.view(), 1e-5).map_err(|e| e.to_string())?;
            let err = max_relative_error(&a, &n, 1e-8);
            ensure!(err <= 1e-4, "{label} seed {seed} {spec:?}: max relative error {err:.3e}");
            worst = worst.max(err);
        }
    }
    ensure!(started.elapsed() < Duration::from_secs(60), "took {:?}", started.elapsed());
    Ok(format!("20 configs, worst relative error {worst:.2e}"))
}

fn c03_fixtures() -> Check {
    // Oracle values evaluated by hand before the build (LSTM: all gate
    // pre-activations 0.6; GRU: h = (1 − σ(0.5))·tanh(0.5)).
    const LSTM_H: f64 = 0.215_319_685_740;
    const GRU_H: f64 = 0.174_468_020_615;
    let mut lstm = RecurrentWeights::zeros(CellKind::Lstm, 1, 1);
    lstm.w.fill(0.5);
    lstm.u.fill(0.25);
    lstm.b.fill(0.1);
    let (h, _, _) = lstm_cell_forward(&lstm, ndarray::array![1.0].view(), ndarray::array![0.0].view(), ndarray::array![0.0].view());
    ensure!((h[0] - LSTM_H).abs() <= 1e-6, "lstm h {}", h[0]);

    let mut gru = RecurrentWeights::zeros(CellKind::Gru, 1, 1);
    gru.w.fill(0.5);
    gru.u.fill(0.5);
    let (g, _) = gru_cell_forward(&gru, ndarray::array![1.0].view(), ndarray::array![0.0].view());
    ensure!((g[0] - GRU_H).abs() <= 1e-6, "gru h {}", g[0]);
    Ok(format!(
        "lstm h {:.12}, gru h {:.12} (the published 0.174440 disagrees with the oracle by {:.1e})",
        h[0],
        g[0],
        (g[0] - 0.174440f64).abs()
    ))
}

fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 4).unwrap() + chrono::Days::new(i as u64)
}

fn series_from_rows(symbol: &str, rows: &[[f64; 5]]) -> SymbolSeries {
    let bars = rows
        .iter()
        .enumerate()
        .map(|(i, r)| PriceBar {
            date: day(i),
            open: r[0],
            close: r[1],
            low: r[2],
            high: r[3],
            volume: r[4],
        })
        .collect();
    SymbolSeries::new(symbol, bars).unwrap()
}

fn random_rows(n: usize, seed: u64) -> Vec<[f64; 5]> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            let open = 1.0 + 999.0 * rng.next_f64();
            let close = 1.0 + 999.0 * rng.next_f64();
            let low = open.min(close) * (1.0 - 0.1 * rng.next_f64());
            let high = open.max(close) * (1.0 + 0.1 * rng.next_f64());
            [open, close, low, high, (1e7 * rng.next_f64()).round()]
        })
        .collect()
}

fn c04_scaler() -> Check {
    let rows = random_rows(1000, 4);
    let series = series_from_rows("RND", &rows);
    let scaler = fit_scaler(&series, rows.len()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for r in &rows {
        for f in Feature::ALL {
            let x = r[f.index()];
            let back = scaler.unscale(f, scaler.scale(f, x));
            let rel = (back - x).abs() / x.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
        }
    }
    ensure!(worst <= 1e-12, "round-trip relative error {worst:e}");
    for f in Feature::ALL {
        let i = f.index();
        ensure!(scaler.scale(f, scaler.min[i]) == 0.0, "{} min does not map to 0", f.name());
        ensure!(scaler.scale(f, scaler.max[i]) == 1.0, "{} max does not map to 1", f.name());
    }
    let mut flat = random_rows(30, 5);
    for r in &mut flat {
        r[4] = 1234.0;
    }
    match fit_scaler(&series_from_rows("FLAT", &flat), 30) {
        Err(PreprocessError::DegenerateFeature(Feature::Volume)) => {}
        other => return Err(format!("constant volume gave {other:?}")),
    }
    Ok(format!("5000 values, worst relative round-trip error {worst:.1e}"))
}

fn c05_windows() -> Check {
    let mut checked = 0;
    for len in [26usize, 30, 100] {
        for t in [3usize, 25] {
            for features in [FeatureSet::Ohlcv, FeatureSet::Cv] {
                let series = series_from_rows("W", &random_rows(len, len as u64 * 31 + t as u64));
                let scaler = fit_scaler(&series, len).map_err(|e| e.to_string())?;
                let scaled = scaler.transform(&series);
                let spec = WindowSpec { time_steps: t, features };
                let ds = build_windows(&scaled, &spec).map_err(|e| e.to_string())?;
                ensure!(ds.len() == len - t, "L={len} T={t}: N={}", ds.len());
                let cols: Vec<usize> = features.features().iter().map(|f| f.index()).collect();
                for i in 0..len - t {
                    for step in 0..t {
                        for (d, &c) in cols.iter().enumerate() {
                            ensure!(ds.x[[i, step, d]] == scaled.rows[i + step][c], "x[{i},{step},{d}] differs");
                        }
                    }
                    ensure!(ds.y[i] == scaled.rows[i + t][Feature::Close.index()], "y[{i}] differs");
                    let target = ds.target_row_index[i];
                    ensure!(target == i + t, "target row {target} for sample {i}");
                    // No lookahead: every input row precedes the target day.
                    ensure!(i + t - 1 < target && ds.target_dates[i] == scaled.dates[target], "lookahead at sample {i}");
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} samples equal to brute-force enumeration"))
}

/// Stopping epoch straight from the rule's definition.
fn brute_force_stop(losses: &[f64], patience: usize) -> usize {
    for e in 1..=losses.len() {
        let prefix = &losses[..e];
        let best = (0..e).fold(0, |b, k| if prefix[k] < prefix[b] { k } else { b }) + 1;
        if e - best >= patience {
            return e;
        }
    }
    losses.len()
}

fn c06_early_stopping() -> Check {
    let mut rng = SplitMix64::new(66);
    for case in 0..100 {
        let max_epochs = 5 + rng.below(80) as usize;
        let patience = 1 + rng.below(20);
        let losses: Vec<f64> = (0..max_epochs).map(|_| rng.next_f64()).collect();
        let mut st = EarlyStopState::default();
        let mut stopped = max_epochs;
        for (k, &v) in losses.iter().enumerate() {
            if early_stop_update(&mut st, k + 1, v, Some(patience), 0.0) == StopDecision::Stop {
                stopped = k + 1;
                break;
            }
        }
        let expected = (st.best_epoch + patience).min(max_epochs);
        ensure!(stopped == expected, "case {case}: stopped {stopped}, min(best+P, max) = {expected}");
        let oracle = brute_force_stop(&losses, patience);
        ensure!(stopped == oracle, "case {case}: stopped {stopped}, brute force {oracle}");
    }

    let series = noisy_sine("ES", 120, 30.0, 0.05, 3);
    let prepared = prepare(&series, &WindowSpec { time_steps: 5, features: FeatureSet::Ohlcv }, 0.2, 0.3)
        .map_err(|e| e.to_string())?;
    let spec = ModelSpec { neurons: 4, time_steps: 5, dropout: 0.2, ..ModelSpec::default() };
    let cfg = TrainConfig { max_epochs: 300, patience: Some(3), batch_size: 8, shuffle_seed: 8, ..TrainConfig::default() };
    let out = train(&spec, &prepared.split, &cfg, 5).map_err(|e| e.to_string())?;
    let r = &out.report;
    let min_val = r.history.iter().filter_map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
    let reeval = evaluate(&out.best_state, &spec, &prepared.split.validation).map_err(|e| e.to_string())?;
    ensure!(reeval.loss == min_val, "restored weights give {} vs recorded minimum {min_val}", reeval.loss);
    ensure!(r.history.len() == r.stopped_epoch, "history {} rows, stopped at {}", r.history.len(), r.stopped_epoch);
    Ok(format!(
        "100 scripted sequences match; live run stopped at epoch {} (best {}), restored val loss {:.3e}",
        r.stopped_epoch, r.best_epoch, reeval.loss
    ))
}

fn small_run(seed: u64) -> Result<(TrainReport, String), String> {
    let series = noisy_sine("DET", 150, 40.0, 0.02, 1);
    let prepared = prepare(&series, &WindowSpec { time_steps: 6, features: FeatureSet::Ohlcv }, 0.2, 0.3)
        .map_err(|e| e.to_string())?;
    let spec = ModelSpec { neurons: 5, time_steps: 6, dropout: 0.2, additional_layer: ExtraLayer::Gru, ..ModelSpec::default() };
    let cfg = TrainConfig { max_epochs: 8, shuffle_seed: seed ^ 0xABCD, ..TrainConfig::default() };
    let out = train(&spec, &prepared.split, &cfg, seed).map_err(|e| e.to_string())?;
    let json = serde_json::to_string(&out.report).map_err(|e| e.to_string())?;
    Ok((out.report, json))
}

fn c07_determinism() -> Check {
    let (a, ja) = small_run(17)?;
    let (b, jb) = small_run(17)?;
    ensure!(ja == jb, "report JSON differs between identical runs");
    ensure!(a.history_csv() == b.history_csv(), "history CSV differs between identical runs");
    let (c, _) = small_run(18)?;
    ensure!(c.history_csv() != a.history_csv(), "different seed gave identical history");
    Ok(format!(
        "metrics JSON ({} bytes) and history CSV identical; byte-level CLI replay is covered in the cli tests",
        ja.len()
    ))
}

fn c08_convergence() -> Check {
    let started = Instant::now();
    let series = noisy_sine("SINE", 500, 50.0, 0.02, 7);
    let prepared = prepare(&series, &WindowSpec::default(), 0.2, 0.3).map_err(|e| e.to_string())?;
    let spec = ModelSpec::default();
    let cfg = TrainConfig { shuffle_seed: 1, ..TrainConfig::default() };
    let out = train(&spec, &prepared.split, &cfg, 42).map_err(|e| e.to_string())?;
    let r = &out.report;
    let test = r.test.ok_or("no test metrics")?;
    let elapsed = started.elapsed();
    ensure!(r.stopped_epoch <= 200, "ran {} epochs", r.stopped_epoch);
    ensure!(test.rmse < 0.05, "test RMSE {:.4}", test.rmse);
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "test RMSE {:.4} (scaled), stopped epoch {} ({:?}), best epoch {}",
        test.rmse, r.stopped_epoch, r.stop_reason, r.best_epoch
    ))
}

fn directional(series: &SymbolSeries, grid: &GridSpec, cfg: &TrainConfig, workers: usize) -> Result<(f64, f64, String), String> {
    let window = WindowSpec::default();
    let prepared = prepare(series, &window, 0.2, 0.3).map_err(|e| e.to_string())?;
    let opts = SearchOptions { master_seed: 2024, workers, baseline: None };
    let trainer = SplitTrainer { split: &prepared.split };
    let out = grid_search(grid, &ModelSpec::default(), cfg, &opts, &trainer).map_err(|e| e.to_string())?;
    let r = &out.report;
    let b = r.baseline.test_rmse.ok_or("baseline has no test RMSE")?;
    let w = r.winner.test_rmse.ok_or("winner has no test RMSE")?;
    Ok((b, w, improvement_line(b, w)))
}

fn c09_nyse() -> Check {
    let Some(path) = std::env::var_os("STOCKCAST_NYSE_PRICES").map(PathBuf::from) else {
        // Synthetic stand-in so the search path still runs end to end.
        let walk = random_walk("PROXY", 1000, 60.0, 0.015, 9);
        let grid = GridSpec { neurons: vec![8, 16], batch_size: vec![32], dropout: vec![0.0], ..GridSpec::default() };
        let cfg = TrainConfig { max_epochs: 25, patience: Some(8), ..TrainConfig::default() };
        let (b, w, line) = directional(&walk, &grid, &cfg, 4)?;
        return Ok(format!(
            "SKIP real data absent (set STOCKCAST_NYSE_PRICES); random-walk proxy winner {} baseline: {line}",
            if w <= b { "<=" } else { ">" }
        ));
    };
    let table = PriceTable::from_path(&path).map_err(|e| e.to_string())?;
    let symbol = table
        .iter()
        .filter(|s| s.len() >= 1000)
        .map(|s| s.symbol.clone())
        .next()
        .ok_or("no symbol with at least 1000 rows")?;
    let series = table.select_symbol(&symbol).map_err(|e| e.to_string())?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (b, w, line) = directional(series, &GridSpec::default(), &TrainConfig::default(), threads)?;
    ensure!(w <= b, "{symbol}: winner test RMSE {w:.4} above baseline {b:.4}; {line}");
    Ok(format!("{symbol}: {line}"))
}

fn trained_model() -> Result<(ModelFile, stockcast_core::preprocess::Prepared), String> {
    let series = noisy_sine("PERSIST", 140, 35.0, 0.02, 12);
    let window = WindowSpec { time_steps: 7, features: FeatureSet::Cv };
    let prepared = prepare(&series, &window, 0.2, 0.3).map_err(|e| e.to_string())?;
    let spec = ModelSpec { neurons: 6, input_dim: 2, time_steps: 7, additional_layer: ExtraLayer::Lstm, dropout: 0.1 };
    let cfg = TrainConfig { max_epochs: 6, shuffle_seed: 3, ..TrainConfig::default() };
    let out = train(&spec, &prepared.split, &cfg, 99).map_err(|e| e.to_string())?;
    let model = ModelFile {
        spec,
        window,
        scaler: prepared.scaler.clone(),
        state: out.best_state,
        provenance: Provenance {
            symbol: "PERSIST".into(),
            init_seed: 99,
            shuffle_seed: 3,
            checkpoint: false,
            epoch: Some(out.report.best_epoch),
            config: serde_json::json!({ "neurons": 6 }),
            created_at: "2020-01-01T00:00:00Z".into(),
        },
    };
    Ok((model, prepared))
}

fn c10_persistence() -> Check {
    let (model, prepared) = trained_model()?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = dir.path().join("model.json");
    save_model(&model, &first).map_err(|e| e.to_string())?;
    let loaded = load_model(&first).map_err(|e| e.to_string())?;
    ensure!(loaded.state == model.state, "weights changed in a round trip");
    let before = evaluate(&model.state, &model.spec, &prepared.split.test).map_err(|e| e.to_string())?;
    let after = evaluate(&loaded.state, &loaded.spec, &prepared.split.test).map_err(|e| e.to_string())?;
    ensure!(
        before.loss.to_bits() == after.loss.to_bits() && before.rmse.to_bits() == after.rmse.to_bits(),
        "metrics differ after reload: {before:?} vs {after:?}"
    );
    let second = dir.path().join("again.json");
    save_model(&loaded, &second).map_err(|e| e.to_string())?;
    let a = fs::read(&first).map_err(|e| e.to_string())?;
    let b = fs::read(&second).map_err(|e| e.to_string())?;
    ensure!(a == b, "save -> load -> save changed bytes");

    let mut restamped = loaded.clone();
    restamped.provenance.created_at = "2031-05-05T12:00:00Z".into();
    let strip = |t: String| t.lines().filter(|l| !l.contains("created_at")).collect::<Vec<_>>().join("\n");
    ensure!(
        strip(to_json(&restamped).map_err(|e| e.to_string())?) == strip(String::from_utf8_lossy(&a).into_owned()),
        "documents differ beyond the timestamp"
    );
    ensure!(from_json(&String::from_utf8_lossy(&a).replace("\"version\": 1", "\"version\": 9")).is_err(), "unknown version accepted");
    Ok(format!("{} bytes, bit-identical test RMSE {:.6}", a.len(), after.rmse))
}

/// Minimal tag balance check: every element closes, in order.
fn well_formed(svg: &str) -> Result<(), String> {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = svg;
    while let Some(open) = rest.find('<') {
        let close = rest[open..].find('>').ok_or("unterminated tag")? + open;
        let tag = &rest[open + 1..close];
        rest = &rest[close + 1..];
        if tag.starts_with('?') || tag.starts_with('!') {
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            let top = stack.pop().ok_or_else(|| format!("stray </{name}>"))?;
            if top != name.trim() {
                return Err(format!("</{name}> closes <{top}>"));
            }
        } else if !tag.ends_with('/') {
            stack.push(tag.split_whitespace().next().unwrap_or_default().to_string());
        }
    }
    if stack.is_empty() {
        Ok(())
    } else {
        Err(format!("unclosed {stack:?}"))
    }
}

fn polyline_lengths(svg: &str) -> Vec<usize> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .map(|l| l.split("points=\"").nth(1).unwrap_or("").trim_end_matches("\"/>").split(' ').count())
        .collect()
}

/// Seven figures from small fixed inputs, so the golden bytes do not depend
/// on training numerics.
fn fixture_figures() -> Result<Vec<(&'static str, String, Vec<usize>)>, String> {
    let rows: Vec<[f64; 5]> = (0..12)
        .map(|i| {
            let x = i as f64;
            [20.0 + x, 20.5 + x * 0.9, 19.0 + x * 0.8, 22.0 + x * 1.1, 1000.0 + 50.0 * x]
        })
        .collect();
    let series = series_from_rows("FIX", &rows);
    let history: Vec<EpochRecord> = [(0.30, 0.40), (0.12, 0.20), (0.06, 0.09), (0.04, 0.11), (0.03, 0.13)]
        .iter()
        .enumerate()
        .map(|(i, &(t, v)): (usize, &(f64, f64))| EpochRecord {
            epoch: i + 1,
            train_loss: t,
            val_loss: Some(v),
            train_rmse: t.sqrt(),
            val_rmse: Some(v.sqrt()),
            running_train_loss: t * 1.1,
        })
        .collect();
    let report = TrainReport {
        history,
        best_epoch: 3,
        best_val_loss: Some(0.09),
        stopped_epoch: 5,
        stop_reason: StopReason::EarlyStop,
        test: None,
        echo: None,
    };
    let actual = vec![30.0, 30.5, 31.25, 30.75, 32.0, 33.5];
    let predicted = vec![29.75, 30.25, 31.0, 31.5, 31.75, 33.0];
    let pairs = PredictionSeries {
        dates: (0..6).map(|i| day(20 + i)).collect(),
        target_row_index: (20..26).collect(),
        scaled_actual: actual.iter().map(|v| v / 40.0).collect(),
        scaled_predicted: predicted.iter().map(|v| v / 40.0).collect(),
        actual,
        predicted,
    };
    let e = |e: stockcast_core::charts::ChartError| e.to_string();
    Ok(vec![
        ("fig1_open.svg", render_price_chart(&series, Feature::Open).map_err(e)?, vec![12]),
        ("fig2_close.svg", render_price_chart(&series, Feature::Close).map_err(e)?, vec![12]),
        ("fig3_low.svg", render_price_chart(&series, Feature::Low).map_err(e)?, vec![12]),
        ("fig4_high.svg", render_price_chart(&series, Feature::High).map_err(e)?, vec![12]),
        ("fig5_rmse.svg", render_history(&report, HistoryMetric::Rmse).map_err(e)?, vec![5, 5]),
        ("fig6_loss.svg", render_history(&report, HistoryMetric::Loss).map_err(e)?, vec![5, 5]),
        ("fig7_prediction.svg", render_prediction_overlay(&pairs, Units::Price).map_err(e)?, vec![6, 6]),
    ])
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

fn c11_figures() -> Check {
    let bless = std::env::var_os("STOCKCAST_BLESS").is_some();
    for (name, svg, lengths) in fixture_figures()? {
        well_formed(&svg).map_err(|e| format!("{name}: {e}"))?;
        ensure!(polyline_lengths(&svg) == lengths, "{name}: polyline lengths {:?}", polyline_lengths(&svg));
        let path = golden_dir().join(name);
        if bless {
            fs::create_dir_all(golden_dir()).map_err(|e| e.to_string())?;
            fs::write(&path, &svg).map_err(|e| e.to_string())?;
        }
        let golden = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure!(golden == svg, "{name} differs from its golden file");
    }

    // The same seven figures from a real training run.
    let (model, prepared) = trained_model()?;
    let series = noisy_sine("PERSIST", 140, 35.0, 0.02, 12);
    let cfg = TrainConfig { max_epochs: 6, shuffle_seed: 3, ..TrainConfig::default() };
    let report = train(&model.spec, &prepared.split, &cfg, 99).map_err(|e| e.to_string())?.report;
    let pairs = predict_series(&model.state, &model.spec, &prepared.split.test, &model.scaler).map_err(|e| e.to_string())?;
    let n_hist = report.history.len();
    let e = |e: stockcast_core::charts::ChartError| e.to_string();
    let mut live = Vec::new();
    for f in [Feature::Open, Feature::Close, Feature::Low, Feature::High] {
        live.push((render_price_chart(&series, f).map_err(e)?, vec![series.len()]));
    }
    live.push((render_history(&report, HistoryMetric::Rmse).map_err(e)?, vec![n_hist, n_hist]));
    live.push((render_history(&report, HistoryMetric::Loss).map_err(e)?, vec![n_hist, n_hist]));
    live.push((render_prediction_overlay(&pairs, Units::Price).map_err(e)?, vec![pairs.len(), pairs.len()]));
    for (i, (svg, lengths)) in live.iter().enumerate() {
        well_formed(svg).map_err(|e| format!("live figure {}: {e}", i + 1))?;
        ensure!(&polyline_lengths(svg) == lengths, "live figure {}: {:?} vs {lengths:?}", i + 1, polyline_lengths(svg));
    }
    ensure!(live[4].0.contains("class=\"marker\""), "history chart lacks the best-epoch marker");
    Ok(format!(
        "7 golden figures byte-equal{}; live run figures well formed",
        if bless { " (blessed)" } else { "" }
    ))
}

/// Scripted trainer: validation RMSE is a fixed function of the cell.
struct Stub {
    fail_extra_gru: bool,
}

impl CellTrainer for Stub {
    fn train_cell(&self, spec: &ModelSpec, cfg: &TrainConfig, _init_seed: u64) -> Result<CellRun, TrainError> {
        if self.fail_extra_gru && spec.additional_layer == ExtraLayer::Gru {
            return Err(TrainError::InvalidConfig("scripted divergence".into()));
        }
        // Ties: every dropout value scores the same for (none, 16, 8).
        let score = match (spec.additional_layer, spec.neurons, cfg.batch_size) {
            (ExtraLayer::None, 16, 8) => 0.01,
            (ExtraLayer::Gru, 64, 32) => 0.005,
            (layer, n, b) => 0.02 + 0.001 * (n as f64).ln() + 0.0001 * b as f64 + if layer == ExtraLayer::Lstm { 0.003 } else { 0.0 },
        };
        Ok(CellRun {
            best_val_rmse: score,
            test_rmse: Some(score * 1.1),
            best_epoch: 1,
            stopped_epoch: 1,
            stop_reason: StopReason::MaxEpochs,
            state: None,
        })
    }
}

fn c12_grid() -> Check {
    let grid = GridSpec::default();
    let cells = enumerate_grid(&grid);
    ensure!(cells.len() == 81, "{} configs", cells.len());
    let defaults = GridCell { additional_layer: ExtraLayer::None, neurons: 16, batch_size: 8, dropout: 0.2 };
    ensure!(cells.iter().any(|c| c.cell == defaults), "(none, 16, 8, 0.2) missing");

    let base_spec = ModelSpec::default();
    let base_cfg = TrainConfig::default();
    let search = |stub: &Stub, workers: usize| {
        grid_search(&grid, &base_spec, &base_cfg, &SearchOptions { master_seed: 7, workers, baseline: None }, stub)
            .map_err(|e| e.to_string())
    };
    let out = search(&Stub { fail_extra_gru: false }, 1)?;
    let w = &out.report.winner.config;
    ensure!(w.additional_layer == ExtraLayer::Gru && w.neurons == 64 && w.batch_size == 32, "winner {w:?}");
    ensure!(out.report.winner.config.dropout == 0.0, "tie not broken by earliest index");

    let out = search(&Stub { fail_extra_gru: true }, 4)?;
    ensure!(out.report.diverged == 27, "{} diverged", out.report.diverged);
    ensure!(out.report.winner.config.additional_layer == ExtraLayer::None, "diverged cell selected");
    ensure!(out.report.winner.index == 0, "tie among dropouts went to index {}", out.report.winner.index);
    let serial = search(&Stub { fail_extra_gru: true }, 1)?;
    ensure!(
        serde_json::to_string(&serial.report).unwrap() == serde_json::to_string(&out.report).unwrap(),
        "report depends on worker count"
    );

    // Seeds follow the configuration, not its position in the lists.
    let shuffled = GridSpec {
        additional_layer: vec![ExtraLayer::Gru, ExtraLayer::None, ExtraLayer::Lstm],
        neurons: vec![64, 16, 32],
        ..GridSpec::default()
    };
    let reordered = grid_search(&shuffled, &base_spec, &base_cfg, &SearchOptions { master_seed: 7, workers: 2, baseline: None }, &Stub { fail_extra_gru: false })
        .map_err(|e| e.to_string())?;
    let base = search(&Stub { fail_extra_gru: false }, 2)?;
    for r in &reordered.report.results {
        let twin = base.report.results.iter().find(|b| b.config == r.config).ok_or("missing twin")?;
        ensure!(twin.init_seed == r.init_seed && twin.shuffle_seed == r.shuffle_seed, "seeds moved with list order");
    }
    Ok(format!(
        "81 configs; stub winner {}:{}:{}:{}, ties to earliest index, divergence excluded, schedule independent",
        w.additional_layer, w.neurons, w.batch_size, w.dropout
    ))
}
