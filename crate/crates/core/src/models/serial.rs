//! Model weight files.
//!
//! Binary container: magic `GRSP`, version `u16`, input shape, head
//! layout, then one record per layer: a kind tag, hyperparameters, shape
//! dims as a `u32` list, raw little-endian 32-bit floats for weights and
//! bias, and an optional INT8 payload with its scale exponent as `i8`.
//! A JSON mirror with the same field names exists for debugging.

use super::{Layer, ModelError, ModelGraph};
use crate::tensor::{Padding, QuantParams, QuantTensor, Tensor};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MODEL_MAGIC: [u8; 4] = *b"GRSP";
pub const MODEL_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?} at offset 0 (expected \"GRSP\")")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported model file version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("truncated model file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("malformed model file at offset {offset}: {detail}")]
    Malformed { offset: usize, detail: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

const KIND_CONV2D: u8 = 1;
const KIND_DENSE: u8 = 2;
const KIND_RELU: u8 = 3;
const KIND_SOFTMAX: u8 = 4;
const KIND_MAXPOOL: u8 = 5;
const KIND_GAP: u8 = 6;
const KIND_FLATTEN: u8 = 7;
const KIND_DROPOUT: u8 = 8;

struct Reader<'a> {
    buf: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelIoError> {
        if self.offset + n > self.buf.len() {
            return Err(ModelIoError::Truncated {
                offset: self.offset,
                needed: self.offset + n - self.buf.len(),
            });
        }
        let s = &self.buf[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelIoError> {
        Ok(self.take(1)?[0])
    }

    fn i8(&mut self) -> Result<i8, ModelIoError> {
        Ok(self.take(1)?[0] as i8)
    }

    fn u16(&mut self) -> Result<u16, ModelIoError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, ModelIoError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32, ModelIoError> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn write_layer(out: &mut Vec<u8>, layer: &Layer) {
    let (kind, hyper, params, bias, quant): (
        u8,
        Vec<u32>,
        Option<&Tensor>,
        Option<&Tensor>,
        Option<&QuantTensor>,
    ) = match layer {
        Layer::Conv2d {
            kernels,
            bias,
            stride,
            padding,
            quant,
        } => (
            KIND_CONV2D,
            vec![
                stride.0 as u32,
                stride.1 as u32,
                match padding {
                    Padding::Valid => 0,
                    Padding::Same => 1,
                },
            ],
            Some(kernels),
            Some(bias),
            quant.as_ref(),
        ),
        Layer::Dense {
            weights,
            bias,
            quant,
        } => (KIND_DENSE, vec![], Some(weights), Some(bias), quant.as_ref()),
        Layer::Relu => (KIND_RELU, vec![], None, None, None),
        Layer::Softmax => (KIND_SOFTMAX, vec![], None, None, None),
        Layer::MaxPool2d { window } => (
            KIND_MAXPOOL,
            vec![window.0 as u32, window.1 as u32],
            None,
            None,
            None,
        ),
        Layer::GlobalAvgPool => (KIND_GAP, vec![], None, None, None),
        Layer::Flatten => (KIND_FLATTEN, vec![], None, None, None),
        Layer::Dropout { rate } => (
            KIND_DROPOUT,
            vec![(rate * 1_000_000.0).round() as u32],
            None,
            None,
            None,
        ),
    };
    out.push(kind);
    out.push(hyper.len() as u8);
    for h in &hyper {
        out.extend_from_slice(&h.to_le_bytes());
    }
    match params {
        Some(t) => {
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        None => out.push(0),
    }
    match bias {
        Some(t) => {
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        None => out.extend_from_slice(&0u32.to_le_bytes()),
    }
    match quant {
        Some(q) => {
            out.push(1);
            out.push(q.params.exponent() as u8);
            out.extend(q.data.iter().map(|&v| v as u8));
        }
        None => out.push(0),
    }
}

fn read_layer(r: &mut Reader) -> Result<Layer, ModelError> {
    let kind_offset = r.offset;
    let kind = r.u8()?;
    let nhyper = r.u8()? as usize;
    let mut hyper = Vec::with_capacity(nhyper);
    for _ in 0..nhyper {
        hyper.push(r.u32()?);
    }
    let ndims = r.u8()? as usize;
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        dims.push(r.u32()? as usize);
    }
    let n: usize = dims.iter().product::<usize>() * usize::from(ndims > 0);
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        weights.push(r.f32()? as f64);
    }
    let bias_len = r.u32()? as usize;
    let mut bias = Vec::with_capacity(bias_len);
    for _ in 0..bias_len {
        bias.push(r.f32()? as f64);
    }
    let quant = match r.u8()? {
        0 => None,
        1 => {
            let exponent = r.i8()?;
            let data: Vec<i8> = r.take(n)?.iter().map(|&b| b as i8).collect();
            Some(QuantTensor {
                shape: dims.clone(),
                data,
                params: QuantParams::from_exponent(exponent),
            })
        }
        other => {
            return Err(ModelError::Io(ModelIoError::Malformed {
                offset: r.offset - 1,
                detail: format!("bad quant flag {other}"),
            }))
        }
    };

    let hyper_err = |detail: String| {
        ModelError::Io(ModelIoError::Malformed {
            offset: kind_offset,
            detail,
        })
    };
    let layer = match kind {
        KIND_CONV2D => {
            if hyper.len() != 3 || dims.len() != 4 {
                return Err(hyper_err("conv2d record needs 3 hypers and 4 dims".into()));
            }
            Layer::Conv2d {
                kernels: Tensor::new(dims, weights).map_err(|e| hyper_err(e.to_string()))?,
                bias: Tensor::from_vec(bias),
                stride: (hyper[0] as usize, hyper[1] as usize),
                padding: if hyper[2] == 0 {
                    Padding::Valid
                } else {
                    Padding::Same
                },
                quant,
            }
        }
        KIND_DENSE => {
            if dims.len() != 2 {
                return Err(hyper_err("dense record needs 2 dims".into()));
            }
            Layer::Dense {
                weights: Tensor::new(dims, weights).map_err(|e| hyper_err(e.to_string()))?,
                bias: Tensor::from_vec(bias),
                quant,
            }
        }
        KIND_RELU => Layer::Relu,
        KIND_SOFTMAX => Layer::Softmax,
        KIND_MAXPOOL => {
            if hyper.len() != 2 {
                return Err(hyper_err("maxpool record needs 2 hypers".into()));
            }
            Layer::MaxPool2d {
                window: (hyper[0] as usize, hyper[1] as usize),
            }
        }
        KIND_GAP => Layer::GlobalAvgPool,
        KIND_FLATTEN => Layer::Flatten,
        KIND_DROPOUT => {
            if hyper.len() != 1 {
                return Err(hyper_err("dropout record needs 1 hyper".into()));
            }
            Layer::Dropout {
                rate: hyper[0] as f64 / 1_000_000.0,
            }
        }
        other => {
            return Err(ModelError::Io(ModelIoError::Malformed {
                offset: kind_offset,
                detail: format!("unknown layer kind tag {other}"),
            }))
        }
    };
    Ok(layer)
}

/// Serializes a model to the binary container format.
pub fn model_to_bytes(model: &ModelGraph) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(model.input_shape.len() as u8);
    for &d in &model.input_shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(model.trunk.len() as u16).to_le_bytes());
    out.push(model.heads.len() as u8);
    for head in &model.heads {
        out.extend_from_slice(&(head.len() as u16).to_le_bytes());
    }
    for layer in model.trunk.iter().chain(model.heads.iter().flatten()) {
        write_layer(&mut out, layer);
    }
    out
}

/// Parses a model from the binary container format.
pub fn model_from_bytes(buf: &[u8]) -> Result<ModelGraph, ModelError> {
    let mut r = Reader { buf, offset: 0 };
    let magic = r.take(4)?;
    if magic != MODEL_MAGIC {
        return Err(ModelError::Io(ModelIoError::BadMagic {
            found: [magic[0], magic[1], magic[2], magic[3]],
        }));
    }
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(ModelError::Io(ModelIoError::VersionMismatch {
            found: version,
            expected: MODEL_VERSION,
        }));
    }
    let ndims = r.u8()? as usize;
    let mut input_shape = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        input_shape.push(r.u32()? as usize);
    }
    let trunk_len = r.u16()? as usize;
    let n_heads = r.u8()? as usize;
    let mut head_lens = Vec::with_capacity(n_heads);
    for _ in 0..n_heads {
        head_lens.push(r.u16()? as usize);
    }
    let mut trunk = Vec::with_capacity(trunk_len);
    for _ in 0..trunk_len {
        trunk.push(read_layer(&mut r)?);
    }
    let mut heads = Vec::with_capacity(n_heads);
    for len in head_lens {
        let mut head = Vec::with_capacity(len);
        for _ in 0..len {
            head.push(read_layer(&mut r)?);
        }
        heads.push(head);
    }
    if r.offset != buf.len() {
        return Err(ModelError::Io(ModelIoError::Malformed {
            offset: r.offset,
            detail: format!("{} trailing bytes", buf.len() - r.offset),
        }));
    }
    let model = ModelGraph {
        input_shape,
        trunk,
        heads,
    };
    model.validate()?;
    Ok(model)
}

/// Writes the binary model file.
pub fn save_model(model: &ModelGraph, path: &Path) -> Result<(), ModelError> {
    let bytes = model_to_bytes(model);
    let mut f = std::fs::File::create(path).map_err(ModelIoError::Io)?;
    f.write_all(&bytes).map_err(ModelIoError::Io)?;
    Ok(())
}

/// Reads and validates a binary model file.
pub fn load_model(path: &Path) -> Result<ModelGraph, ModelError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .map_err(ModelIoError::Io)?
        .read_to_end(&mut buf)
        .map_err(ModelIoError::Io)?;
    model_from_bytes(&buf)
}

// JSON mirror: same structure and field names, for debugging.

#[derive(Serialize, Deserialize)]
struct JsonModel {
    magic: String,
    version: u16,
    input_shape: Vec<usize>,
    trunk: Vec<JsonLayer>,
    heads: Vec<Vec<JsonLayer>>,
}

#[derive(Serialize, Deserialize)]
struct JsonLayer {
    kind: String,
    hyper: Vec<u32>,
    dims: Vec<usize>,
    weights: Vec<f32>,
    bias: Vec<f32>,
    quant: Option<JsonQuant>,
}

#[derive(Serialize, Deserialize)]
struct JsonQuant {
    scale_exponent: i8,
    data: Vec<i8>,
}

fn layer_to_json(layer: &Layer) -> JsonLayer {
    let mut bytes = Vec::new();
    write_layer(&mut bytes, layer);
    // Re-derive the fields from the canonical encoder to stay in lockstep.
    let mut r = Reader {
        buf: &bytes,
        offset: 0,
    };
    let kind = r.u8().unwrap();
    let nhyper = r.u8().unwrap() as usize;
    let hyper: Vec<u32> = (0..nhyper).map(|_| r.u32().unwrap()).collect();
    let ndims = r.u8().unwrap() as usize;
    let dims: Vec<usize> = (0..ndims).map(|_| r.u32().unwrap() as usize).collect();
    let n: usize = dims.iter().product::<usize>() * usize::from(ndims > 0);
    let weights: Vec<f32> = (0..n).map(|_| r.f32().unwrap()).collect();
    let bias_len = r.u32().unwrap() as usize;
    let bias: Vec<f32> = (0..bias_len).map(|_| r.f32().unwrap()).collect();
    let quant = match r.u8().unwrap() {
        1 => Some(JsonQuant {
            scale_exponent: r.i8().unwrap(),
            data: r.take(n).unwrap().iter().map(|&b| b as i8).collect(),
        }),
        _ => None,
    };
    JsonLayer {
        kind: match kind {
            KIND_CONV2D => "conv2d",
            KIND_DENSE => "dense",
            KIND_RELU => "relu",
            KIND_SOFTMAX => "softmax",
            KIND_MAXPOOL => "max_pool2d",
            KIND_GAP => "global_avg_pool",
            KIND_FLATTEN => "flatten",
            KIND_DROPOUT => "dropout",
            _ => unreachable!("encoder only emits known kinds"),
        }
        .into(),
        hyper,
        dims,
        weights,
        bias,
        quant,
    }
}

fn layer_from_json(l: &JsonLayer) -> Result<Layer, ModelError> {
    let kind = match l.kind.as_str() {
        "conv2d" => KIND_CONV2D,
        "dense" => KIND_DENSE,
        "relu" => KIND_RELU,
        "softmax" => KIND_SOFTMAX,
        "max_pool2d" => KIND_MAXPOOL,
        "global_avg_pool" => KIND_GAP,
        "flatten" => KIND_FLATTEN,
        "dropout" => KIND_DROPOUT,
        other => {
            return Err(ModelError::Io(ModelIoError::Malformed {
                offset: 0,
                detail: format!("unknown layer kind {other:?}"),
            }))
        }
    };
    let mut bytes = vec![kind, l.hyper.len() as u8];
    for h in &l.hyper {
        bytes.extend_from_slice(&h.to_le_bytes());
    }
    bytes.push(l.dims.len() as u8);
    for &d in &l.dims {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &l.weights {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&(l.bias.len() as u32).to_le_bytes());
    for &v in &l.bias {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    match &l.quant {
        Some(q) => {
            bytes.push(1);
            bytes.push(q.scale_exponent as u8);
            bytes.extend(q.data.iter().map(|&v| v as u8));
        }
        None => bytes.push(0),
    }
    read_layer(&mut Reader {
        buf: &bytes,
        offset: 0,
    })
}

/// Writes the JSON mirror of the model file.
pub fn save_model_json(model: &ModelGraph, path: &Path) -> Result<(), ModelError> {
    let json = JsonModel {
        magic: "GRSP".into(),
        version: MODEL_VERSION,
        input_shape: model.input_shape.clone(),
        trunk: model.trunk.iter().map(layer_to_json).collect(),
        heads: model
            .heads
            .iter()
            .map(|h| h.iter().map(layer_to_json).collect())
            .collect(),
    };
    let text = serde_json::to_string_pretty(&json).map_err(ModelIoError::Json)?;
    std::fs::write(path, text).map_err(ModelIoError::Io)?;
    Ok(())
}

/// Reads the JSON mirror format.
pub fn load_model_json(path: &Path) -> Result<ModelGraph, ModelError> {
    let text = std::fs::read_to_string(path).map_err(ModelIoError::Io)?;
    let json: JsonModel = serde_json::from_str(&text).map_err(ModelIoError::Json)?;
    if json.magic.as_bytes() != MODEL_MAGIC {
        return Err(ModelError::Io(ModelIoError::BadMagic {
            found: {
                let mut m = [0u8; 4];
                for (d, s) in m.iter_mut().zip(json.magic.as_bytes()) {
                    *d = *s;
                }
                m
            },
        }));
    }
    if json.version != MODEL_VERSION {
        return Err(ModelError::Io(ModelIoError::VersionMismatch {
            found: json.version,
            expected: MODEL_VERSION,
        }));
    }
    let model = ModelGraph {
        input_shape: json.input_shape,
        trunk: json
            .trunk
            .iter()
            .map(layer_from_json)
            .collect::<Result<_, _>>()?,
        heads: json
            .heads
            .iter()
            .map(|h| h.iter().map(layer_from_json).collect::<Result<_, _>>())
            .collect::<Result<_, _>>()?,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::train::init_weights;
    use crate::models::{build_gesture_cnn, build_grasp_force_net};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_model() -> ModelGraph {
        let mut m = build_grasp_force_net(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        init_weights(&mut m, &mut rng);
        m
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let model = sample_model();
        let bytes1 = model_to_bytes(&model);
        let loaded = model_from_bytes(&bytes1).unwrap();
        let bytes2 = model_to_bytes(&loaded);
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn gesture_model_round_trips() {
        let mut model = build_gesture_cnn(12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        init_weights(&mut model, &mut rng);
        let bytes = model_to_bytes(&model);
        let loaded = model_from_bytes(&bytes).unwrap();
        assert_eq!(model_to_bytes(&loaded), bytes);
        assert_eq!(loaded.input_shape, vec![12, 6, 1]);
        assert_eq!(loaded.param_count(), model.param_count());
    }

    #[test]
    fn truncated_file_names_missing_bytes() {
        let bytes = model_to_bytes(&sample_model());
        let cut = &bytes[..bytes.len() - 7];
        let err = model_from_bytes(cut).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("truncated"), "{msg}");
        assert!(msg.contains("offset"), "{msg}");
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = model_to_bytes(&sample_model());
        bytes[0] = b'X';
        let err = model_from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = model_to_bytes(&sample_model());
        bytes[4] = 9;
        let err = model_from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version 9"));
    }

    #[test]
    fn int8_payload_round_trips_scale_exponent() {
        let mut model = sample_model();
        model.attach_weight_quant().unwrap();
        let bytes = model_to_bytes(&model);
        let loaded = model_from_bytes(&bytes).unwrap();
        let exps: Vec<i8> = loaded
            .trunk
            .iter()
            .chain(loaded.heads.iter().flatten())
            .filter_map(|l| match l {
                Layer::Conv2d { quant, .. } | Layer::Dense { quant, .. } => {
                    quant.as_ref().map(|q| q.params.exponent())
                }
                _ => None,
            })
            .collect();
        let orig: Vec<i8> = model
            .trunk
            .iter()
            .chain(model.heads.iter().flatten())
            .filter_map(|l| match l {
                Layer::Conv2d { quant, .. } | Layer::Dense { quant, .. } => {
                    quant.as_ref().map(|q| q.params.exponent())
                }
                _ => None,
            })
            .collect();
        assert_eq!(exps, orig);
        assert!(!exps.is_empty());
        assert_eq!(model_to_bytes(&loaded), bytes);
    }

    #[test]
    fn json_mirror_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let model = sample_model();
        let path = dir.path().join("model.json");
        save_model_json(&model, &path).unwrap();
        let loaded = load_model_json(&path).unwrap();
        assert_eq!(model_to_bytes(&loaded), model_to_bytes(&model));
    }

    #[test]
    fn file_round_trip_via_disk() {
        let dir = tempfile::tempdir().unwrap();
        let model = sample_model();
        let path = dir.path().join("model.bin");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let path2 = dir.path().join("model2.bin");
        save_model(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }
}
