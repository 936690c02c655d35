//! Binary checkpoint container.
//!
//! ```text
//! magic    8 bytes  "LOGKEYCK"
//! version  u32 LE   container version (1)
//! hlen     u32 LE   length of the JSON header
//! header   hlen bytes: {"config":..,"vocabulary":..,"policy_version":..,"tensors":[{"name":..,"shape":[..]}]}
//! data     every tensor in header order, little-endian f32 or f64 per config.precision
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::LanguageModel;
use super::params::{Parameters, Tensor};
use super::scalar::Scalar;
use super::vocab::Vocabulary;
use super::LmError;

pub const MAGIC: &[u8; 8] = b"LOGKEYCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocabulary: Vocabulary,
    policy_version: u64,
    tensors: Vec<TensorMeta>,
}

fn bad(msg: impl Into<String>) -> LmError {
    LmError::Checkpoint(msg.into())
}

pub fn save<F: Scalar, W: Write>(model: &LanguageModel<F>, mut w: W) -> Result<(), LmError> {
    let header = Header {
        config: model.config().clone(),
        vocabulary: *model.vocab(),
        policy_version: model.version(),
        tensors: model
            .params()
            .tensors
            .iter()
            .map(|t| TensorMeta {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + json.len() + model.params().count() * F::BYTES);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in &model.params().tensors {
        for &x in &t.data {
            x.write_le(&mut buf);
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn load<F: Scalar, R: Read>(mut r: R) -> Result<LanguageModel<F>, LmError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(e.to_string()))?;
    if header.config.precision != F::PRECISION {
        return Err(bad(format!(
            "checkpoint holds {:?} parameters, requested {:?}",
            header.config.precision,
            F::PRECISION
        )));
    }
    if header.vocabulary.size() != header.config.vocab_size {
        return Err(bad("vocabulary does not match config.vocab_size"));
    }
    let mut data = &body[hlen..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for meta in header.tensors {
        let n: usize = meta.shape.iter().product();
        let need = n * F::BYTES;
        if data.len() < need {
            return Err(bad(format!("truncated data for tensor {}", meta.name)));
        }
        let values = data[..need].chunks_exact(F::BYTES).map(F::read_le).collect();
        data = &data[need..];
        tensors.push(Tensor {
            name: meta.name,
            shape: meta.shape,
            data: values,
        });
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes after tensor data"));
    }
    LanguageModel::from_parameters(header.config, Parameters { tensors }, header.policy_version)
}
