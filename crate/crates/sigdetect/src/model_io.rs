//! Model container: `SGDMODEL` magic, u32 LE format version, u32 LE header
//! length, a JSON header describing the layers, then every parameter tensor
//! as little-endian f32 in declaration order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sigdetect_core::classifier::{ClassifierSpec, ModelMetrics, TrainedModel};
use sigdetect_core::detector::{DetectorModel, EpochLoss};
use sigdetect_core::{Layer, LayerDescriptor, Network, Tensor};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SGDMODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelInfo {
    Classifier {
        spec: ClassifierSpec,
        metrics: ModelMetrics,
        seed: u64,
    },
    Detector {
        history: Vec<EpochLoss>,
        best_epoch: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    input_shape: Vec<usize>,
    layers: Vec<LayerDescriptor>,
    param_count: usize,
    info: ModelInfo,
}

pub fn encode(network: &Network<f32>, info: &ModelInfo) -> Vec<u8> {
    let header = Header {
        input_shape: network.input_shape().to_vec(),
        layers: network.layers().iter().map(Layer::descriptor).collect(),
        param_count: network.num_params(),
        info: info.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * header.param_count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in network.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(Network<f32>, ModelInfo)> {
    let corrupt = |detail: String| Error::Corrupt {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a model container (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() < hlen {
        return Err(corrupt("truncated header".into()));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(format!("header: {e}")))?;
    let mut data = body[hlen..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let payload = body.len() - hlen;
    if payload != 4 * header.param_count {
        return Err(corrupt(format!(
            "expected {} parameter bytes, found {payload}",
            4 * header.param_count
        )));
    }
    let mut layers = Vec::with_capacity(header.layers.len());
    for desc in &header.layers {
        let mut params = Vec::new();
        for shape in desc.param_shapes() {
            let n: usize = shape.iter().product();
            let values: Vec<f32> = data.by_ref().take(n).collect();
            if values.len() != n {
                return Err(corrupt("parameter data shorter than the layer table".into()));
            }
            params.push(Tensor::new(shape, values)?);
        }
        layers.push(Layer::from_descriptor(desc, params)?);
    }
    if data.next().is_some() {
        return Err(corrupt("parameter count disagrees with the layer table".into()));
    }
    Ok((Network::new(header.input_shape, layers)?, header.info))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    std::fs::write(path, bytes).map_err(Error::io(path))
}

pub fn save_classifier(path: &Path, model: &TrainedModel) -> Result<()> {
    let info = ModelInfo::Classifier {
        spec: model.spec.clone(),
        metrics: model.metrics.clone(),
        seed: model.seed,
    };
    write(path, &encode(&model.network, &info))
}

pub fn load_classifier(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    match decode(&bytes, path)? {
        (network, ModelInfo::Classifier { spec, metrics, seed }) => Ok(TrainedModel {
            network,
            spec,
            metrics,
            seed,
        }),
        _ => Err(Error::Corrupt {
            path: path.to_path_buf(),
            detail: "container holds a detector, not a classifier".into(),
        }),
    }
}

pub fn save_detector(path: &Path, model: &DetectorModel) -> Result<()> {
    let info = ModelInfo::Detector {
        history: model.history.clone(),
        best_epoch: model.best_epoch,
    };
    write(path, &encode(&model.network, &info))
}

pub fn load_detector(path: &Path) -> Result<DetectorModel> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    match decode(&bytes, path)? {
        (network, ModelInfo::Detector { history, best_epoch }) => Ok(DetectorModel {
            network,
            history,
            best_epoch,
        }),
        _ => Err(Error::Corrupt {
            path: path.to_path_buf(),
            detail: "container holds a classifier, not a detector".into(),
        }),
    }
}
