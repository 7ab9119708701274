use ndarray::{s, Array1, Array2, ArrayView1, ArrayView3, Axis};

use super::gru::{self, GruStep};
use super::lstm::{self, LstmStep};
use super::{CellKind, Gradients, ModelSpec, NetworkState, NeuralError, RecurrentWeights};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from a generator seeded with the value.
    Train { dropout_seed: u64 },
    Eval,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Lstm(Vec<LstmStep>),
    Gru(Vec<GruStep>),
}

/// Everything [`backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    /// Per-layer dropout masks over that layer's emitted outputs, already
    /// scaled by 1/(1−p). `None` when dropout is inactive.
    masks: Vec<Option<Vec<Array2<f64>>>>,
    /// Head input after dropout, `[B, H]`.
    head_input: Array2<f64>,
}

fn dropout_mask(rng: &mut SplitMix64, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.next_f64() < p { 0.0 } else { keep })
}

fn run_layer(p: &RecurrentWeights, inputs: &[Array2<f64>]) -> (Vec<Array2<f64>>, LayerCache) {
    let batch = inputs[0].nrows();
    let hidden = p.hidden();
    let mut h = Array2::<f64>::zeros((batch, hidden));
    let mut outputs = Vec::with_capacity(inputs.len());
    match p.cell {
        CellKind::Lstm => {
            let mut c = Array2::<f64>::zeros((batch, hidden));
            let mut steps = Vec::with_capacity(inputs.len());
            for x in inputs {
                let st = lstm::step(p, x.view(), h.view(), c.view());
                h = st.h.clone();
                c = st.c.clone();
                outputs.push(st.h.clone());
                steps.push(st);
            }
            (outputs, LayerCache::Lstm(steps))
        }
        CellKind::Gru => {
            let mut steps = Vec::with_capacity(inputs.len());
            for x in inputs {
                let st = gru::step(p, x.view(), h.view());
                h = st.h.clone();
                outputs.push(st.h.clone());
                steps.push(st);
            }
            (outputs, LayerCache::Gru(steps))
        }
    }
}

/// Runs the stack over `batch` (`[B, T, D]`) from zero initial state.
///
/// Every layer but the last emits its full sequence into the next; the last
/// emits only its final hidden state. Inverted dropout is applied to each
/// layer's emitted outputs in train mode only.
pub fn forward(
    state: &NetworkState,
    spec: &ModelSpec,
    batch: ArrayView3<f64>,
    mode: Mode,
) -> Result<(Array1<f64>, ForwardCache), NeuralError> {
    let (b, t_steps, d) = batch.dim();
    if b == 0 || t_steps == 0 {
        return Err(NeuralError::Empty);
    }
    if d != state.layers[0].input_dim() {
        return Err(NeuralError::ShapeMismatch(format!(
            "batch has {d} features, model expects {}",
            state.layers[0].input_dim()
        )));
    }
    let mut rng = match mode {
        Mode::Train { dropout_seed } if spec.dropout > 0.0 => Some(SplitMix64::new(dropout_seed)),
        _ => None,
    };
    let mut inputs: Vec<Array2<f64>> = (0..t_steps)
        .map(|t| batch.slice(s![.., t, ..]).to_owned())
        .collect();
    let depth = state.layers.len();
    let mut caches = Vec::with_capacity(depth);
    let mut masks = Vec::with_capacity(depth);
    for (li, layer) in state.layers.iter().enumerate() {
        let (outputs, cache) = run_layer(layer, &inputs);
        caches.push(cache);
        let mut emitted = if li + 1 == depth {
            vec![outputs.last().expect("t_steps > 0").clone()]
        } else {
            outputs
        };
        match rng.as_mut() {
            Some(rng) => {
                let layer_masks: Vec<Array2<f64>> = emitted
                    .iter()
                    .map(|o| dropout_mask(rng, o.dim(), spec.dropout))
                    .collect();
                for (o, m) in emitted.iter_mut().zip(&layer_masks) {
                    *o *= m;
                }
                masks.push(Some(layer_masks));
            }
            None => masks.push(None),
        }
        inputs = emitted;
    }
    let head_input = inputs.pop().expect("final layer emits one state");
    let predictions = head_input.dot(&state.head_w) + state.head_b;
    if predictions.iter().any(|v| !v.is_finite()) {
        return Err(NeuralError::NonFiniteActivation);
    }
    Ok((
        predictions,
        ForwardCache {
            layers: caches,
            masks,
            head_input,
        },
    ))
}

/// Eval-mode predictions.
pub fn predict(state: &NetworkState, spec: &ModelSpec, batch: ArrayView3<f64>) -> Result<Array1<f64>, NeuralError> {
    forward(state, spec, batch, Mode::Eval).map(|(p, _)| p)
}

/// Exact gradients of the batch MSE through the head, dropout masks and all
/// time steps of every layer.
pub fn backward(
    state: &NetworkState,
    cache: &ForwardCache,
    pred: ArrayView1<f64>,
    target: ArrayView1<f64>,
) -> Result<Gradients, NeuralError> {
    if pred.len() != target.len() {
        return Err(NeuralError::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    let batch = pred.len() as f64;
    let d_pred: Array1<f64> = (&pred - &target) * (2.0 / batch);
    let mut grads = Gradients::zeros_like(state);
    grads.head_w = cache.head_input.t().dot(&d_pred);
    grads.head_b = d_pred.sum();

    let head_w = state.head_w.view().insert_axis(Axis(0));
    let d_head_in = d_pred.view().insert_axis(Axis(1)).dot(&head_w);

    let depth = state.layers.len();
    // Gradient w.r.t. each emitted output of the layer being processed.
    let mut d_emitted: Vec<Array2<f64>> = vec![d_head_in];
    for li in (0..depth).rev() {
        if let Some(masks) = &cache.masks[li] {
            for (d, m) in d_emitted.iter_mut().zip(masks) {
                *d *= m;
            }
        }
        let layer = &state.layers[li];
        let layer_grads = &mut grads.layers[li];
        let need_dx = li > 0;
        d_emitted = match &cache.layers[li] {
            LayerCache::Lstm(steps) => {
                let t_steps = steps.len();
                let shape = steps[0].h.raw_dim();
                let mut dh_next = Array2::<f64>::zeros(shape);
                let mut dc_next = Array2::<f64>::zeros(shape);
                let mut dx = vec![Array2::<f64>::zeros((0, 0)); if need_dx { t_steps } else { 0 }];
                for t in (0..t_steps).rev() {
                    let dh = emitted_grad(&d_emitted, t, t_steps).map_or_else(|| dh_next.clone(), |g| g + &dh_next);
                    let (dxt, dhp, dcp) = lstm::step_backward(layer, &steps[t], &dh, &dc_next, layer_grads);
                    if need_dx {
                        dx[t] = dxt;
                    }
                    dh_next = dhp;
                    dc_next = dcp;
                }
                dx
            }
            LayerCache::Gru(steps) => {
                let t_steps = steps.len();
                let mut dh_next = Array2::<f64>::zeros(steps[0].h.raw_dim());
                let mut dx = vec![Array2::<f64>::zeros((0, 0)); if need_dx { t_steps } else { 0 }];
                for t in (0..t_steps).rev() {
                    let dh = emitted_grad(&d_emitted, t, t_steps).map_or_else(|| dh_next.clone(), |g| g + &dh_next);
                    let (dxt, dhp) = gru::step_backward(layer, &steps[t], &dh, layer_grads);
                    if need_dx {
                        dx[t] = dxt;
                    }
                    dh_next = dhp;
                }
                dx
            }
        };
    }
    if !grads.is_finite() {
        return Err(NeuralError::NonFiniteGradient);
    }
    Ok(grads)
}

/// Upstream gradient for step `t`: a full sequence, or only the final step.
fn emitted_grad(d_emitted: &[Array2<f64>], t: usize, t_steps: usize) -> Option<&Array2<f64>> {
    if d_emitted.len() == t_steps {
        Some(&d_emitted[t])
    } else if t + 1 == t_steps {
        d_emitted.last()
    } else {
        None
    }
}
