//! JSON model files: spec, window layout, scaler and weights.
//!
//! Weight values are written as 17-significant-digit decimals, so a load
//! reproduces every `f64` bit for bit. Files are written to a temporary
//! sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::neural::{CellKind, ModelSpec, NetworkState, RecurrentWeights};
use crate::numfmt::fmt17;
use crate::preprocess::{ScalerParams, WindowSpec};
use crate::trainer::{CheckpointSink, TrainError};

pub const FORMAT_NAME: &str = "stockcast-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelStoreError {
    #[error("io: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("unknown model format `{format}` version {version}")]
    UnknownVersion { format: String, version: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("corrupt number {0:?}")]
    CorruptNumber(String),
    #[error("malformed model file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub symbol: String,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    #[serde(default)]
    pub checkpoint: bool,
    #[serde(default)]
    pub epoch: Option<usize>,
    /// Resolved run configuration, stored verbatim.
    #[serde(default)]
    pub config: serde_json::Value,
    pub created_at: String,
}

/// Everything a model file holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub spec: ModelSpec,
    pub window: WindowSpec,
    pub scaler: ScalerParams,
    pub state: NetworkState,
    pub provenance: Provenance,
}

type Numbers = Vec<Box<RawValue>>;

#[derive(Serialize, Deserialize)]
struct ScalerDoc {
    features: Vec<String>,
    min: Numbers,
    max: Numbers,
    fit_start: usize,
    fit_end: usize,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    cell: CellKind,
    w_shape: [usize; 2],
    w: Numbers,
    u_shape: [usize; 2],
    u: Numbers,
    b_shape: [usize; 1],
    b: Numbers,
}

#[derive(Serialize, Deserialize)]
struct HeadDoc {
    w_shape: [usize; 1],
    w: Numbers,
    b: Numbers,
}

#[derive(Serialize, Deserialize)]
struct WeightsDoc {
    layers: Vec<LayerDoc>,
    head: HeadDoc,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    spec: ModelSpec,
    window: WindowSpec,
    scaler: ScalerDoc,
    weights: WeightsDoc,
    provenance: Provenance,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

fn numbers(values: &[f64]) -> Numbers {
    values
        .iter()
        .map(|&v| RawValue::from_string(fmt17(v)).expect("finite decimal is valid JSON"))
        .collect()
}

fn parse_numbers(raw: &Numbers) -> Result<Vec<f64>, ModelStoreError> {
    raw.iter()
        .map(|r| {
            r.get()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ModelStoreError::CorruptNumber(r.get().to_string()))
        })
        .collect()
}

fn array2(shape: [usize; 2], raw: &Numbers, what: &str) -> Result<Array2<f64>, ModelStoreError> {
    let data = parse_numbers(raw)?;
    Array2::from_shape_vec((shape[0], shape[1]), data)
        .map_err(|_| ModelStoreError::ShapeMismatch(format!("{what}: declared {shape:?}, found {} values", raw.len())))
}

fn array1(len: usize, raw: &Numbers, what: &str) -> Result<Array1<f64>, ModelStoreError> {
    if raw.len() != len {
        return Err(ModelStoreError::ShapeMismatch(format!(
            "{what}: declared [{len}], found {} values",
            raw.len()
        )));
    }
    Ok(Array1::from(parse_numbers(raw)?))
}

/// Serialized model document.
pub fn to_json(model: &ModelFile) -> Result<String, ModelStoreError> {
    if !model.state.is_finite() {
        return Err(ModelStoreError::CorruptNumber("non-finite weight".into()));
    }
    model
        .state
        .check_shapes(&model.spec)
        .map_err(|e| ModelStoreError::ShapeMismatch(e.to_string()))?;
    let layers = model
        .state
        .layers
        .iter()
        .map(|l| LayerDoc {
            cell: l.cell,
            w_shape: [l.w.nrows(), l.w.ncols()],
            w: numbers(l.w.as_slice().expect("standard layout")),
            u_shape: [l.u.nrows(), l.u.ncols()],
            u: numbers(l.u.as_slice().expect("standard layout")),
            b_shape: [l.b.len()],
            b: numbers(l.b.as_slice().expect("standard layout")),
        })
        .collect();
    let doc = Document {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        spec: model.spec,
        window: model.window,
        scaler: ScalerDoc {
            features: crate::marketdata::Feature::ALL.iter().map(|f| f.name().to_string()).collect(),
            min: numbers(&model.scaler.min),
            max: numbers(&model.scaler.max),
            fit_start: model.scaler.fit_start,
            fit_end: model.scaler.fit_end,
        },
        weights: WeightsDoc {
            layers,
            head: HeadDoc {
                w_shape: [model.state.head_w.len()],
                w: numbers(model.state.head_w.as_slice().expect("standard layout")),
                b: numbers(&[model.state.head_b]),
            },
        },
        provenance: model.provenance.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

/// Parses and validates a model document. Never returns a partially
/// populated model.
pub fn from_json(text: &str) -> Result<ModelFile, ModelStoreError> {
    let header: Header = serde_json::from_str(text)?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(ModelStoreError::UnknownVersion {
            format: header.format,
            version: header.version,
        });
    }
    let doc: Document = serde_json::from_str(text)?;
    doc.spec
        .validate()
        .map_err(|e| ModelStoreError::ShapeMismatch(e.to_string()))?;
    if doc.window.time_steps != doc.spec.time_steps || doc.window.input_dim() != doc.spec.input_dim {
        return Err(ModelStoreError::ShapeMismatch("window layout disagrees with model spec".into()));
    }
    let min = parse_numbers(&doc.scaler.min)?;
    let max = parse_numbers(&doc.scaler.max)?;
    let (Ok(min), Ok(max)) = (<[f64; 5]>::try_from(min), <[f64; 5]>::try_from(max)) else {
        return Err(ModelStoreError::ShapeMismatch("scaler needs five minima and maxima".into()));
    };
    let scaler = ScalerParams {
        min,
        max,
        fit_start: doc.scaler.fit_start,
        fit_end: doc.scaler.fit_end,
    };
    let layers = doc
        .weights
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            Ok(RecurrentWeights {
                cell: l.cell,
                w: array2(l.w_shape, &l.w, &format!("layer {i} W"))?,
                u: array2(l.u_shape, &l.u, &format!("layer {i} U"))?,
                b: array1(l.b_shape[0], &l.b, &format!("layer {i} b"))?,
            })
        })
        .collect::<Result<Vec<_>, ModelStoreError>>()?;
    let head = &doc.weights.head;
    let head_w = array1(head.w_shape[0], &head.w, "head w")?;
    let head_b = match parse_numbers(&head.b)?.as_slice() {
        [b] => *b,
        other => {
            return Err(ModelStoreError::ShapeMismatch(format!(
                "head bias: expected 1 value, found {}",
                other.len()
            )))
        }
    };
    let state = NetworkState { layers, head_w, head_b };
    state
        .check_shapes(&doc.spec)
        .map_err(|e| ModelStoreError::ShapeMismatch(e.to_string()))?;
    Ok(ModelFile {
        spec: doc.spec,
        window: doc.window,
        scaler,
        state,
        provenance: doc.provenance,
    })
}

pub fn save_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<(), ModelStoreError> {
    write_atomic(path.as_ref(), to_json(model)?.as_bytes())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile, ModelStoreError> {
    from_json(&fs::read_to_string(path)?)
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it over
/// `path`. Readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Mirrors each new best snapshot to disk as a checkpoint model file.
pub struct FileCheckpoint {
    pub path: PathBuf,
    pub spec: ModelSpec,
    pub window: WindowSpec,
    pub scaler: ScalerParams,
    pub provenance: Provenance,
}

impl CheckpointSink for FileCheckpoint {
    fn save(&mut self, epoch: usize, state: &NetworkState) -> Result<(), TrainError> {
        let model = ModelFile {
            spec: self.spec,
            window: self.window,
            scaler: self.scaler.clone(),
            state: state.clone(),
            provenance: Provenance {
                checkpoint: true,
                epoch: Some(epoch),
                ..self.provenance.clone()
            },
        };
        save_model(&model, &self.path).map_err(|e| TrainError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_network, ExtraLayer};

    fn fixture(extra: ExtraLayer) -> ModelFile {
        let spec = ModelSpec { neurons: 3, additional_layer: extra, dropout: 0.2, input_dim: 5, time_steps: 4 };
        ModelFile {
            spec,
            window: WindowSpec { time_steps: 4, features: crate::preprocess::FeatureSet::Ohlcv },
            scaler: ScalerParams { min: [1.0, 2.0, 0.5, 3.0, 10.0], max: [9.0, 8.5, 7.25, 11.0, 1e7], fit_start: 0, fit_end: 40 },
            state: init_network(&spec, 77).unwrap(),
            provenance: Provenance {
                symbol: "TEST".into(),
                init_seed: 77,
                shuffle_seed: 5,
                checkpoint: false,
                epoch: None,
                config: serde_json::json!({"max_epochs": 3}),
                created_at: "2024-01-01T00:00:00Z".into(),
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for extra in [ExtraLayer::None, ExtraLayer::Lstm, ExtraLayer::Gru] {
            let m = fixture(extra);
            let text = to_json(&m).unwrap();
            let back = from_json(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(to_json(&back).unwrap(), text);
        }
    }

    #[test]
    fn default_width_array_lengths() {
        let spec = ModelSpec::default();
        let mut m = fixture(ExtraLayer::None);
        m.spec = spec;
        m.window = WindowSpec::default();
        m.state = init_network(&spec, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&to_json(&m).unwrap()).unwrap();
        let l = &v["weights"]["layers"][0];
        assert_eq!(l["w"].as_array().unwrap().len(), 320);
        assert_eq!(l["u"].as_array().unwrap().len(), 1024);
        assert_eq!(l["b"].as_array().unwrap().len(), 64);
        assert_eq!(v["weights"]["head"]["w"].as_array().unwrap().len(), 16);
        assert_eq!(v["weights"]["head"]["b"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn tampered_shape_rejected() {
        let text = to_json(&fixture(ExtraLayer::None)).unwrap();
        let tampered = text.replacen("\"w_shape\": [\n          12,\n          5\n        ]", "\"w_shape\": [\n          12,\n          6\n        ]", 1);
        assert_ne!(tampered, text);
        assert!(matches!(from_json(&tampered), Err(ModelStoreError::ShapeMismatch(_))));
    }

    #[test]
    fn unknown_version_rejected() {
        let text = to_json(&fixture(ExtraLayer::None)).unwrap();
        let v2 = text.replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(from_json(&v2), Err(ModelStoreError::UnknownVersion { version: 2, .. })));
    }

    #[test]
    fn truncated_file_rejected() {
        let text = to_json(&fixture(ExtraLayer::Gru)).unwrap();
        for cut in [10, text.len() / 3, text.len() / 2, text.len() - 3] {
            assert!(from_json(&text[..cut]).is_err());
        }
    }

    #[test]
    fn corrupt_number_rejected() {
        let mut m = fixture(ExtraLayer::None);
        m.state.head_b = 0.125;
        let text = to_json(&m).unwrap();
        let bad = text.replacen(&fmt17(0.125), "1e999", 1);
        assert!(matches!(from_json(&bad), Err(ModelStoreError::CorruptNumber(_))));
    }

    #[test]
    fn atomic_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = fixture(ExtraLayer::Lstm);
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }
}
