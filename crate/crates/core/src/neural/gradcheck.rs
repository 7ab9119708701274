use ndarray::{ArrayView1, ArrayView3};

use super::{mse_loss, predict, Gradients, ModelSpec, NetworkState, NeuralError};

/// Central differences `(L(θ+ε) − L(θ−ε)) / 2ε` for every parameter, with
/// dropout disabled. Costs two forward passes per parameter.
pub fn numeric_gradient(
    state: &NetworkState,
    spec: &ModelSpec,
    batch: ArrayView3<f64>,
    target: ArrayView1<f64>,
    epsilon: f64,
) -> Result<Gradients, NeuralError> {
    let mut probe = state.clone();
    let base = state.to_flat();
    let mut flat = base.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut loss_at = |flat: &[f64]| -> Result<f64, NeuralError> {
        probe.set_flat(flat);
        mse_loss(predict(&probe, spec, batch)?.view(), target)
    };
    for k in 0..base.len() {
        flat[k] = base[k] + epsilon;
        let plus = loss_at(&flat)?;
        flat[k] = base[k] - epsilon;
        let minus = loss_at(&flat)?;
        flat[k] = base[k];
        out.push((plus - minus) / (2.0 * epsilon));
    }
    Ok(Gradients::from_flat(state, &out))
}

/// Largest `|a − n| / max(|a|, |n|)` over components where either magnitude
/// reaches `floor`.
pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients, floor: f64) -> f64 {
    analytic
        .to_flat()
        .iter()
        .zip(numeric.to_flat())
        .filter(|(a, n)| a.abs() >= floor || n.abs() >= floor)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()))
        .fold(0.0, f64::max)
}
