use ndarray::{Array1, Array2};

use super::{CellKind, ModelSpec, NeuralError};
use crate::rng::SplitMix64;

/// Kernels of one recurrent layer. Rows are gate blocks of `H` units in
/// (i, f, g, o) order for LSTM and (z, r, n) order for GRU.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentWeights {
    pub cell: CellKind,
    /// Input kernel `[G·H, D]`.
    pub w: Array2<f64>,
    /// Recurrent kernel `[G·H, H]`.
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

impl RecurrentWeights {
    pub fn zeros(cell: CellKind, input_dim: usize, hidden: usize) -> Self {
        let rows = cell.gates() * hidden;
        Self {
            cell,
            w: Array2::zeros((rows, input_dim)),
            u: Array2::zeros((rows, hidden)),
            b: Array1::zeros(rows),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<RecurrentWeights>,
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

/// `∂loss/∂θ`, shape-congruent with [`NetworkState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

impl NetworkState {
    /// All-zero weights for `spec`.
    pub fn zeros(spec: &ModelSpec) -> Self {
        let h = spec.neurons;
        let layers = spec
            .layer_cells()
            .into_iter()
            .enumerate()
            .map(|(i, cell)| RecurrentWeights::zeros(cell, if i == 0 { spec.input_dim } else { h }, h))
            .collect();
        Self {
            layers,
            head_w: Array1::zeros(h),
            head_b: 0.0,
        }
    }

    /// Weight arrays in canonical order: per layer W, U, b; then head w, head b.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.u.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out.push(self.head_w.as_slice().expect("standard layout"));
        out.push(std::slice::from_ref(&self.head_b));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.u.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head_w.as_slice_mut().expect("standard layout"));
        out.push(std::slice::from_mut(&mut self.head_b));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Checks every array against the shapes `spec` implies.
    pub fn check_shapes(&self, spec: &ModelSpec) -> Result<(), NeuralError> {
        let cells = spec.layer_cells();
        if cells.len() != self.layers.len() {
            return Err(NeuralError::ShapeMismatch(format!(
                "expected {} recurrent layers, found {}",
                cells.len(),
                self.layers.len()
            )));
        }
        for (i, ((layer, cell), (w, u, b))) in self
            .layers
            .iter()
            .zip(cells)
            .zip(spec.layer_shapes())
            .enumerate()
        {
            if layer.cell != cell
                || layer.w.dim() != w
                || layer.u.dim() != u
                || layer.b.len() != b
            {
                return Err(NeuralError::ShapeMismatch(format!("layer {i} does not match the model spec")));
            }
        }
        if self.head_w.len() != spec.neurons {
            return Err(NeuralError::ShapeMismatch(format!(
                "head has {} weights, expected {}",
                self.head_w.len(),
                spec.neurons
            )));
        }
        Ok(())
    }
}

impl Gradients {
    pub fn zeros_like(state: &NetworkState) -> Self {
        Self {
            layers: state
                .layers
                .iter()
                .map(|l| LayerGradients {
                    w: Array2::zeros(l.w.raw_dim()),
                    u: Array2::zeros(l.u.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
            head_w: Array1::zeros(state.head_w.raw_dim()),
            head_b: 0.0,
        }
    }

    /// Same canonical order as [`NetworkState::slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.u.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out.push(self.head_w.as_slice().expect("standard layout"));
        out.push(std::slice::from_ref(&self.head_b));
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn from_flat(state: &NetworkState, flat: &[f64]) -> Self {
        let mut g = Self::zeros_like(state);
        let mut offset = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[offset..offset + dst.len()]);
            offset += dst.len();
        };
        for l in &mut g.layers {
            take(l.w.as_slice_mut().expect("standard layout"));
            take(l.u.as_slice_mut().expect("standard layout"));
            take(l.b.as_slice_mut().expect("standard layout"));
        }
        take(g.head_w.as_slice_mut().expect("standard layout"));
        take(std::slice::from_mut(&mut g.head_b));
        g
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Uniform Glorot kernels, zero biases except the LSTM forget gate at 1.0.
/// Draws are taken layer by layer (W then U, row-major), then the head.
pub fn init_network(spec: &ModelSpec, seed: u64) -> Result<NetworkState, NeuralError> {
    spec.validate()?;
    let mut rng = SplitMix64::new(seed);
    let mut state = NetworkState::zeros(spec);
    let h = spec.neurons;
    for layer in &mut state.layers {
        let rows = layer.w.nrows();
        let limit = (6.0 / (layer.w.ncols() + rows) as f64).sqrt();
        layer.w.iter_mut().for_each(|v| *v = rng.symmetric(limit));
        let limit = (6.0 / (layer.u.ncols() + rows) as f64).sqrt();
        layer.u.iter_mut().for_each(|v| *v = rng.symmetric(limit));
        if layer.cell == CellKind::Lstm {
            layer.b.slice_mut(ndarray::s![h..2 * h]).fill(1.0);
        }
    }
    let limit = (6.0 / (h + 1) as f64).sqrt();
    state.head_w.iter_mut().for_each(|v| *v = rng.symmetric(limit));
    Ok(state)
}
