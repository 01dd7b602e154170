//! Parameter files: magic, version, JSON header, little-endian f32 payload.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Parameter, Tensor};

pub const MAGIC: &[u8; 4] = b"BNCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint does not match model: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    tensors: Vec<TensorEntry>,
    meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor<f32>)>,
    /// Free-form metadata (config, validation loss, provenance).
    pub meta: serde_json::Value,
}

pub fn write_checkpoint<W: Write>(
    mut out: W,
    params: &[&Parameter<f32>],
    meta: &serde_json::Value,
) -> Result<(), CheckpointError> {
    let header = Header {
        tensors: params
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let header = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for p in params {
        let mut buf = Vec::with_capacity(p.value.len() * 4);
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        input.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let tensor = Tensor::from_vec(&entry.shape, data)
            .map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
        tensors.push((entry.name, tensor));
    }
    Ok(Checkpoint {
        tensors,
        meta: header.meta,
    })
}

impl Checkpoint {
    /// Copies stored values into `params`, which must match by name, order and shape.
    pub fn load_into(&self, params: &mut [&mut Parameter<f32>]) -> Result<(), CheckpointError> {
        if params.len() != self.tensors.len() {
            return Err(CheckpointError::Mismatch(format!(
                "{} tensors stored, model has {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (p, (name, t)) in params.iter_mut().zip(&self.tensors) {
            if &p.name != name || p.value.shape() != t.shape() {
                return Err(CheckpointError::Mismatch(format!(
                    "stored {name} {:?}, model {} {:?}",
                    t.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.value = t.clone();
            p.zero_grad();
        }
        Ok(())
    }
}
