//! Checkpoint persistence with a byte-exact round trip.
//!
//! Layout: magic bytes `UMLB`, a little-endian 32-bit format version,
//! a little-endian 32-bit byte length followed by that many bytes of UTF-8
//! JSON header, then the raw little-endian 64-bit float payload of every
//! tensor, in the order the header's directory lists them. The header
//! carries both configs, the step counters, the randomness state, and the
//! tensor directory (name, shape, payload byte offset).
//!
//! All training randomness is derived from the master seed plus labelled
//! counters, so the stored randomness state is just that seed and the next
//! step to run; resuming replays exactly the batches and masks an
//! uninterrupted run would have drawn.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;
use crate::training::{AdamSlot, OptimizerState, TrainConfig};

pub const MAGIC: [u8; 4] = *b"UMLB";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {found:?} (expected {MAGIC:?})")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported checkpoint version {found} (this build reads {VERSION})")]
    VersionMismatch { found: u32 },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("truncated tensor {name:?}: wanted {wanted} bytes, payload ended after {got}")]
    TruncatedTensor {
        name: String,
        wanted: usize,
        got: usize,
    },
    #[error("tensor directory omits {0:?}")]
    MissingTensor(String),
    #[error("unexpected tensor {0:?} in directory")]
    UnexpectedTensor(String),
    #[error("tensor {name:?}: directory offset {found}, payload cursor {expected}")]
    BadOffset {
        name: String,
        found: u64,
        expected: u64,
    },
    #[error("tensor {name:?}: shape {found:?} does not fit the config (expected {expected:?})")]
    BadShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: Box<CheckpointError>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Stream-derivation state: everything random is a function of the master
/// seed, a label, and a counter, so this plus the step counter replays any
/// point of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub master_seed: u64,
    /// First step a resumed run will execute.
    pub next_step: u64,
}

/// A training run frozen between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub opt: OptimizerState,
    pub train: TrainConfig,
    /// Optimizer steps completed so far.
    pub completed_steps: u64,
}

impl Checkpoint {
    pub fn rng_state(&self) -> RngState {
        RngState {
            master_seed: self.train.master_seed,
            next_step: self.completed_steps,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    rng: RngState,
    completed_steps: u64,
    optimizer_step: u64,
    tensors: Vec<TensorEntry>,
}

/// Tensor payload order: model parameters first, then the Adam moments as
/// `adam.m.<name>` / `adam.v.<name>` per parameter.
fn tensor_listing(ckpt: &Checkpoint) -> Result<Vec<(String, Tensor)>, CheckpointError> {
    let mut out: Vec<(String, Tensor)> = ckpt
        .params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    for (name, _) in ckpt.params.named() {
        let slot = ckpt
            .opt
            .slots
            .get(&name)
            .ok_or_else(|| CheckpointError::MissingTensor(format!("adam.m.{name}")))?;
        out.push((format!("adam.m.{name}"), slot.m.clone()));
        out.push((format!("adam.v.{name}"), slot.v.clone()));
    }
    Ok(out)
}

pub fn save<W: Write>(ckpt: &Checkpoint, mut w: W) -> Result<(), CheckpointError> {
    let tensors = tensor_listing(ckpt)?;
    let mut directory = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in &tensors {
        directory.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += (t.numel() * 8) as u64;
    }
    let header = Header {
        model: ckpt.params.config.clone(),
        train: ckpt.train.clone(),
        rng: ckpt.rng_state(),
        completed_steps: ckpt.completed_steps,
        optimizer_step: ckpt.opt.step,
        tensors: directory,
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| CheckpointError::BadHeader(e.to_string()))?;

    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, t) in &tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load<R: Read>(mut r: R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic { found: magic });
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch { found: version });
    }
    r.read_exact(&mut word)?;
    let header_len = u32::from_le_bytes(word) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)
        .map_err(|e| CheckpointError::BadHeader(format!("header cut short: {e}")))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;

    // Skeleton of the right shapes, then fill every tensor from the
    // payload, enforcing that offsets are exactly sequential.
    let mut params = zeroed_params(header.model.clone())?;
    let mut opt = OptimizerState::new(&params);
    opt.step = header.optimizer_step;

    let expected: Vec<(String, Vec<usize>)> = {
        let mut v: Vec<(String, Vec<usize>)> = params
            .named()
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect();
        let base = v.clone();
        for (n, s) in base {
            v.push((format!("adam.m.{n}"), s.clone()));
            v.push((format!("adam.v.{n}"), s));
        }
        v
    };
    for (name, _) in &expected {
        if !header.tensors.iter().any(|e| &e.name == name) {
            return Err(CheckpointError::MissingTensor(name.clone()));
        }
    }

    let mut cursor = 0u64;
    for entry in &header.tensors {
        let expected_shape = expected
            .iter()
            .find(|(n, _)| n == &entry.name)
            .map(|(_, s)| s.clone())
            .ok_or_else(|| CheckpointError::UnexpectedTensor(entry.name.clone()))?;
        if entry.shape != expected_shape {
            return Err(CheckpointError::BadShape {
                name: entry.name.clone(),
                found: entry.shape.clone(),
                expected: expected_shape,
            });
        }
        if entry.offset != cursor {
            return Err(CheckpointError::BadOffset {
                name: entry.name.clone(),
                found: entry.offset,
                expected: cursor,
            });
        }
        let numel: usize = entry.shape.iter().product();
        let wanted = numel * 8;
        let mut buf = vec![0u8; wanted];
        let mut got = 0usize;
        while got < wanted {
            let n = r.read(&mut buf[got..])?;
            if n == 0 {
                return Err(CheckpointError::TruncatedTensor {
                    name: entry.name.clone(),
                    wanted,
                    got,
                });
            }
            got += n;
        }
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let tensor = Tensor::from_vec(&entry.shape, data)
            .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
        place_tensor(&mut params, &mut opt, &entry.name, tensor)?;
        cursor += wanted as u64;
    }

    Ok(Checkpoint {
        params,
        opt,
        train: header.train,
        completed_steps: header.completed_steps,
    })
}

pub fn save_file<P: AsRef<Path>>(ckpt: &Checkpoint, path: P) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let with_context = |e: CheckpointError| CheckpointError::File {
        path: path.display().to_string(),
        source: Box::new(e),
    };
    let file = File::create(path).map_err(|e| with_context(e.into()))?;
    save(ckpt, BufWriter::new(file)).map_err(with_context)
}

pub fn load_file<P: AsRef<Path>>(path: P) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let with_context = |e: CheckpointError| CheckpointError::File {
        path: path.display().to_string(),
        source: Box::new(e),
    };
    let file = File::open(path).map_err(|e| with_context(e.into()))?;
    load(BufReader::new(file)).map_err(with_context)
}

fn zeroed_params(config: ModelConfig) -> Result<ModelParams, CheckpointError> {
    let mut params = ModelParams::init(config, 0)
        .map_err(|e| CheckpointError::BadHeader(format!("config rejected: {e}")))?;
    for (_, t) in params.named_mut() {
        for v in t.data_mut() {
            *v = 0.0;
        }
    }
    Ok(params)
}

fn place_tensor(
    params: &mut ModelParams,
    opt: &mut OptimizerState,
    name: &str,
    tensor: Tensor,
) -> Result<(), CheckpointError> {
    if let Some(rest) = name.strip_prefix("adam.m.") {
        let slot = opt
            .slots
            .get_mut(rest)
            .ok_or_else(|| CheckpointError::UnexpectedTensor(name.to_string()))?;
        slot.m = tensor;
        return Ok(());
    }
    if let Some(rest) = name.strip_prefix("adam.v.") {
        let slot = opt
            .slots
            .get_mut(rest)
            .ok_or_else(|| CheckpointError::UnexpectedTensor(name.to_string()))?;
        slot.v = tensor;
        return Ok(());
    }
    for (n, t) in params.named_mut() {
        if n == name {
            *t = tensor;
            return Ok(());
        }
    }
    Err(CheckpointError::UnexpectedTensor(name.to_string()))
}

/// Fresh optimizer state whose slots carry the given moments; used only in
/// tests and tools that build checkpoints by hand.
pub fn optimizer_from_slots(
    params: &ModelParams,
    slots: impl IntoIterator<Item = (String, AdamSlot)>,
    step: u64,
) -> OptimizerState {
    let mut opt = OptimizerState::new(params);
    opt.step = step;
    for (name, slot) in slots {
        opt.slots.insert(name, slot);
    }
    opt
}
