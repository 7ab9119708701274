use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    /// Gate blocks stacked in the kernels: (i, f, g, o) or (z, r, n).
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

/// Optional second recurrent layer stacked on the base LSTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExtraLayer {
    #[default]
    None,
    Lstm,
    Gru,
}

impl ExtraLayer {
    pub fn cell(self) -> Option<CellKind> {
        match self {
            ExtraLayer::None => None,
            ExtraLayer::Lstm => Some(CellKind::Lstm),
            ExtraLayer::Gru => Some(CellKind::Gru),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExtraLayer::None => "none",
            ExtraLayer::Lstm => "lstm",
            ExtraLayer::Gru => "gru",
        }
    }
}

impl fmt::Display for ExtraLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExtraLayer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ExtraLayer::None),
            "lstm" => Ok(ExtraLayer::Lstm),
            "gru" => Ok(ExtraLayer::Gru),
            other => Err(format!("unknown layer `{other}` (expected none, lstm or gru)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub neurons: usize,
    pub additional_layer: ExtraLayer,
    pub dropout: f64,
    pub input_dim: usize,
    pub time_steps: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            neurons: 16,
            additional_layer: ExtraLayer::None,
            dropout: 0.2,
            input_dim: 5,
            time_steps: 25,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |msg: String| Err(NeuralError::InvalidSpec(msg));
        if self.neurons == 0 {
            return bad("neurons must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.input_dim == 0 {
            return bad("input_dim must be at least 1".into());
        }
        if self.time_steps == 0 {
            return bad("time_steps must be at least 1".into());
        }
        Ok(())
    }

    /// Cell type of every recurrent layer, bottom first.
    pub fn layer_cells(&self) -> Vec<CellKind> {
        std::iter::once(CellKind::Lstm)
            .chain(self.additional_layer.cell())
            .collect()
    }

    /// Kernel shapes `(W, U, b)` for each recurrent layer.
    pub fn layer_shapes(&self) -> Vec<((usize, usize), (usize, usize), usize)> {
        let h = self.neurons;
        self.layer_cells()
            .into_iter()
            .enumerate()
            .map(|(i, cell)| {
                let rows = cell.gates() * h;
                let fan_in = if i == 0 { self.input_dim } else { h };
                ((rows, fan_in), (rows, h), rows)
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|((wr, wc), (ur, uc), b)| wr * wc + ur * uc + b)
            .sum::<usize>()
            + self.neurons
            + 1
    }
}
