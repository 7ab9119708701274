//! Trains the default model on a noisy sine and prints test metrics.

use std::time::Instant;

use stockcast_core::neural::ModelSpec;
use stockcast_core::preprocess::{prepare, WindowSpec};
use stockcast_core::synthetic::noisy_sine;
use stockcast_core::trainer::{train, TrainConfig};

fn main() {
    let series = noisy_sine("SINE", 500, 50.0, 0.02, 7);
    let window = WindowSpec::default();
    let prepared = prepare(&series, &window, 0.2, 0.3).expect("prepare");
    let spec = ModelSpec::default();
    let cfg = TrainConfig { shuffle_seed: 1, ..TrainConfig::default() };
    let start = Instant::now();
    let outcome = train(&spec, &prepared.split, &cfg, 42).expect("train");
    let r = &outcome.report;
    println!(
        "epochs {} best {} reason {:?} test {:?} in {:.1?}",
        r.stopped_epoch,
        r.best_epoch,
        r.stop_reason,
        r.test,
        start.elapsed()
    );
}
