//! LSTM cell: i, f, o = σ(·), g = tanh(·), c = f⊙c₋ + i⊙g, h = o⊙tanh(c).

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{sigmoid, LayerGradients, RecurrentWeights};

/// Activations of one batched step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub c_prev: Array2<f64>,
    pub i: Array2<f64>,
    pub f: Array2<f64>,
    pub g: Array2<f64>,
    pub o: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

/// One step for a batch: `x` is `[B, D]`, states are `[B, H]`.
pub fn step(p: &RecurrentWeights, x: ArrayView2<f64>, h_prev: ArrayView2<f64>, c_prev: ArrayView2<f64>) -> LstmStep {
    let h = p.hidden();
    let z = x.dot(&p.w.t()) + h_prev.dot(&p.u.t()) + &p.b;
    let i = z.slice(s![.., 0..h]).mapv(sigmoid);
    let f = z.slice(s![.., h..2 * h]).mapv(sigmoid);
    let g = z.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
    let o = z.slice(s![.., 3 * h..4 * h]).mapv(sigmoid);
    let c = &f * &c_prev + &i * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h_new = &o * &tanh_c;
    LstmStep {
        x: x.to_owned(),
        h_prev: h_prev.to_owned(),
        c_prev: c_prev.to_owned(),
        i,
        f,
        g,
        o,
        c,
        tanh_c,
        h: h_new,
    }
}

/// Single-sample convenience wrapper around [`step`].
pub fn lstm_cell_forward(
    p: &RecurrentWeights,
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>, LstmStep) {
    let st = step(p, x.insert_axis(Axis(0)), h_prev.insert_axis(Axis(0)), c_prev.insert_axis(Axis(0)));
    (st.h.row(0).to_owned(), st.c.row(0).to_owned(), st)
}

/// Backpropagates one step. `dh` and `dc` are the total gradients flowing
/// into this step's h and c. Accumulates into `grads` and returns
/// `(dx, dh_prev, dc_prev)`.
pub fn step_backward(
    p: &RecurrentWeights,
    st: &LstmStep,
    dh: &Array2<f64>,
    dc: &Array2<f64>,
    grads: &mut LayerGradients,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let h = p.hidden();
    let batch = dh.nrows();
    let d_o = dh * &st.tanh_c;
    let dc_total = dc + &(dh * &st.o * &st.tanh_c.mapv(|t| 1.0 - t * t));
    let d_i = &dc_total * &st.g;
    let d_g = &dc_total * &st.i;
    let d_f = &dc_total * &st.c_prev;
    let dc_prev = &dc_total * &st.f;

    let mut dz = Array2::<f64>::zeros((batch, 4 * h));
    dz.slice_mut(s![.., 0..h]).assign(&(&d_i * &st.i.mapv(|v| v * (1.0 - v))));
    dz.slice_mut(s![.., h..2 * h]).assign(&(&d_f * &st.f.mapv(|v| v * (1.0 - v))));
    dz.slice_mut(s![.., 2 * h..3 * h]).assign(&(&d_g * &st.g.mapv(|v| 1.0 - v * v)));
    dz.slice_mut(s![.., 3 * h..4 * h]).assign(&(&d_o * &st.o.mapv(|v| v * (1.0 - v))));

    grads.w += &dz.t().dot(&st.x);
    grads.u += &dz.t().dot(&st.h_prev);
    grads.b += &dz.sum_axis(Axis(0));
    let dx = dz.dot(&p.w);
    let dh_prev = dz.dot(&p.u);
    (dx, dh_prev, dc_prev)
}
