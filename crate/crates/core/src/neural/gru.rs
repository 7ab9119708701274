//! GRU cell: z, r = σ(·), n = tanh(W_n·x + U_n·(r⊙h₋) + b_n),
//! h = z⊙h₋ + (1−z)⊙n.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{sigmoid, LayerGradients, RecurrentWeights};

#[derive(Debug, Clone)]
pub struct GruStep {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub z: Array2<f64>,
    pub r: Array2<f64>,
    pub n: Array2<f64>,
    /// r ⊙ h_prev
    pub rh: Array2<f64>,
    pub h: Array2<f64>,
}

pub fn step(p: &RecurrentWeights, x: ArrayView2<f64>, h_prev: ArrayView2<f64>) -> GruStep {
    let h = p.hidden();
    let wx = x.dot(&p.w.t()) + &p.b;
    let u_zr = p.u.slice(s![0..2 * h, ..]);
    let zr = &wx.slice(s![.., 0..2 * h]) + &h_prev.dot(&u_zr.t());
    let z = zr.slice(s![.., 0..h]).mapv(sigmoid);
    let r = zr.slice(s![.., h..2 * h]).mapv(sigmoid);
    let rh = &r * &h_prev;
    let u_n = p.u.slice(s![2 * h..3 * h, ..]);
    let n = (&wx.slice(s![.., 2 * h..3 * h]) + &rh.dot(&u_n.t())).mapv(f64::tanh);
    let h_new = &z * &h_prev + &(1.0 - &z) * &n;
    GruStep {
        x: x.to_owned(),
        h_prev: h_prev.to_owned(),
        z,
        r,
        n,
        rh,
        h: h_new,
    }
}

pub fn gru_cell_forward(p: &RecurrentWeights, x: ArrayView1<f64>, h_prev: ArrayView1<f64>) -> (Array1<f64>, GruStep) {
    let st = step(p, x.insert_axis(Axis(0)), h_prev.insert_axis(Axis(0)));
    (st.h.row(0).to_owned(), st)
}

/// Backpropagates one step given the total gradient into this step's h.
/// Returns `(dx, dh_prev)`.
pub fn step_backward(
    p: &RecurrentWeights,
    st: &GruStep,
    dh: &Array2<f64>,
    grads: &mut LayerGradients,
) -> (Array2<f64>, Array2<f64>) {
    let h = p.hidden();
    let batch = dh.nrows();
    let d_z = dh * &(&st.h_prev - &st.n);
    let d_n = dh * &(1.0 - &st.z);
    let mut dh_prev = dh * &st.z;

    let da_n = &d_n * &st.n.mapv(|v| 1.0 - v * v);
    let da_z = &d_z * &st.z.mapv(|v| v * (1.0 - v));
    let u_n = p.u.slice(s![2 * h..3 * h, ..]);
    let d_rh = da_n.dot(&u_n);
    let d_r = &d_rh * &st.h_prev;
    dh_prev += &(&d_rh * &st.r);
    let da_r = &d_r * &st.r.mapv(|v| v * (1.0 - v));

    let mut da = Array2::<f64>::zeros((batch, 3 * h));
    da.slice_mut(s![.., 0..h]).assign(&da_z);
    da.slice_mut(s![.., h..2 * h]).assign(&da_r);
    da.slice_mut(s![.., 2 * h..3 * h]).assign(&da_n);

    grads.w += &da.t().dot(&st.x);
    grads.b += &da.sum_axis(Axis(0));
    let da_zr = da.slice(s![.., 0..2 * h]);
    grads.u.slice_mut(s![0..2 * h, ..]).scaled_add(1.0, &da_zr.t().dot(&st.h_prev));
    grads.u.slice_mut(s![2 * h..3 * h, ..]).scaled_add(1.0, &da_n.t().dot(&st.rh));

    let dx = da.dot(&p.w);
    dh_prev += &da_zr.dot(&p.u.slice(s![0..2 * h, ..]));
    (dx, dh_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::CellKind;
    use ndarray::array;

    #[test]
    fn zero_parameters_halve_state() {
        let p = RecurrentWeights::zeros(CellKind::Gru, 2, 3);
        let h_prev = array![0.4, -1.0, 2.0];
        let (h, st) = gru_cell_forward(&p, array![1.0, 1.0].view(), h_prev.view());
        assert!(st.z.iter().chain(st.r.iter()).all(|&v| v == 0.5));
        assert!(st.n.iter().all(|&v| v == 0.0));
        assert_eq!(h, &h_prev * 0.5);
    }

    #[test]
    fn saturated_update_gate_keeps_state() {
        let mut p = RecurrentWeights::zeros(CellKind::Gru, 1, 2);
        p.b.slice_mut(s![0..2]).fill(20.0);
        let h_prev = array![0.9, -0.3];
        let (h, _) = gru_cell_forward(&p, array![3.0].view(), h_prev.view());
        for (a, b) in h.iter().zip(h_prev.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn scalar_fixture() {
        let mut p = RecurrentWeights::zeros(CellKind::Gru, 1, 1);
        p.w.fill(0.5);
        p.u.fill(0.5);
        let (h, st) = gru_cell_forward(&p, array![1.0].view(), array![0.0].view());
        assert!((st.z[[0, 0]] - 0.622_459_331_201_855).abs() < 1e-6);
        assert!((st.n[[0, 0]] - 0.462_117_157_260_010).abs() < 1e-6);
        // (1 - σ(0.5))·tanh(0.5), evaluated independently.
        assert!((h[0] - 0.174_468_020_615).abs() < 1e-6);
    }
}
