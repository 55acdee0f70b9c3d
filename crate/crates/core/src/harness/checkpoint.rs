//! Checkpoint directories.
//!
//! ```text
//! <dir>/manifest.json   format version, config echo, step, knowledge.iteration,
//!                       metric snapshot, optimizer step counts, blob digest
//! <dir>/index.tsv       name, dtype, shape, byte offset, byte length per tensor
//! <dir>/tensors.bin     raw little-endian tensor data, concatenated by name
//! ```
//!
//! Tensors are stored in the model dtype (`f32` for training runs). Model
//! parameters and batch-norm buffers keep their store names; the knowledge
//! buffer is `knowledge.K` and Adam moments are `optim.m.<name>` and
//! `optim.v.<name>`.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::optim::AdamSlot;
use super::train::TrainState;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::metrics::FrameMetrics;
use crate::model::FblNet;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FILE: &str = "index.tsv";
pub const BLOB_FILE: &str = "tensors.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobInfo {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    pub step: u64,
    #[serde(rename = "knowledge.iteration")]
    pub knowledge_iteration: u64,
    /// Validation means at save time, if any.
    pub metrics: Option<FrameMetrics>,
    pub optimizer_steps: BTreeMap<String, u64>,
    pub blob: BlobInfo,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub bytes: u64,
}

fn dtype_name(d: DType) -> Result<&'static str> {
    match d {
        DType::F32 => Ok("f32"),
        DType::F64 => Ok("f64"),
        other => Err(Error::Version(format!("unsupported tensor dtype {other:?}"))),
    }
}

fn parse_dtype(s: &str) -> Result<DType> {
    match s {
        "f32" => Ok(DType::F32),
        "f64" => Ok(DType::F64),
        other => Err(Error::Version(format!("unknown dtype {other:?}"))),
    }
}

fn tensor_bytes(t: &Tensor) -> Result<Vec<u8>> {
    let flat = t.flatten_all()?;
    Ok(match t.dtype() {
        DType::F32 => flat.to_vec1::<f32>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        DType::F64 => flat.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        other => return Err(Error::Version(format!("unsupported tensor dtype {other:?}"))),
    })
}

fn tensor_from_bytes(bytes: &[u8], dtype: DType, shape: &[usize]) -> Result<Tensor> {
    let dev = Device::Cpu;
    Ok(match dtype {
        DType::F32 => {
            let v: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            Tensor::from_vec(v, shape, &dev)?
        }
        _ => {
            let v: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            Tensor::from_vec(v, shape, &dev)?
        }
    })
}

/// Every tensor a checkpoint holds, by name.
pub fn named_tensors(state: &TrainState) -> Result<BTreeMap<String, Tensor>> {
    let model = &state.model;
    let mut out = BTreeMap::new();
    let mut put = |name: String, t: Tensor| {
        let prev = out.insert(name.clone(), t);
        assert!(prev.is_none(), "duplicate checkpoint tensor {name}");
    };
    for (name, var) in model.store.vars() {
        put(name.clone(), var.as_tensor().detach());
    }
    for (name, buf) in model.store.buffers() {
        put(name.clone(), buf.get());
    }
    put("knowledge.K".into(), model.knowledge.k.clone());
    for (name, t) in model.knowledge.update.named_tensors() {
        put(name.into(), t);
    }
    for (name, slot) in &state.optim.state {
        put(format!("optim.m.{name}"), slot.m.clone());
        put(format!("optim.v.{name}"), slot.v.clone());
    }
    Ok(out)
}

/// Writes `state` to `dir`, creating it if needed.
pub fn save_checkpoint(state: &TrainState, dir: &Path, metrics: Option<&FrameMetrics>) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tensors = named_tensors(state)?;
    let mut blob = Vec::new();
    let mut index = String::from("name\tdtype\tshape\toffset\tbytes\n");
    for (name, t) in &tensors {
        let bytes = tensor_bytes(t)?;
        let shape: Vec<String> = t.dims().iter().map(usize::to_string).collect();
        index.push_str(&format!(
            "{name}\t{}\t{}\t{}\t{}\n",
            dtype_name(t.dtype())?,
            shape.join(","),
            blob.len(),
            bytes.len()
        ));
        blob.extend(bytes);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dtype: dtype_name(state.model.dtype())?.into(),
        step: state.step,
        knowledge_iteration: state.model.knowledge.iteration,
        metrics: metrics.cloned(),
        optimizer_steps: state.optim.state.iter().map(|(k, s)| (k.clone(), s.steps)).collect(),
        blob: BlobInfo {
            file: BLOB_FILE.into(),
            bytes: blob.len() as u64,
            sha256: hex::encode(Sha256::digest(&blob)),
        },
        config: state.run.clone(),
    };
    let write = |name: &str, data: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, data).map_err(|e| Error::io(&p, e))
    };
    write(BLOB_FILE, &blob)?;
    write(INDEX_FILE, index.as_bytes())?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write(MANIFEST_FILE, json.as_bytes())?;
    Ok(manifest)
}

/// Reads and validates the manifest alone.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        other => {
            return Err(Error::Version(format!(
                "checkpoint format {other:?}, this build reads {FORMAT_VERSION}"
            )))
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Version(format!("manifest schema: {e}")))
}

fn parse_index(text: &str, blob_len: u64) -> Result<Vec<IndexEntry>> {
    let bad = |n: usize, why: &str| Error::Version(format!("index line {}: {why}", n + 1));
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad(n, "expected 5 columns"));
        }
        let shape: Vec<usize> = if cols[2].is_empty() {
            vec![]
        } else {
            cols[2].split(',').map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(n, "shape"))?
        };
        let dtype = parse_dtype(cols[1])?;
        let offset: u64 = cols[3].parse().map_err(|_| bad(n, "offset"))?;
        let bytes: u64 = cols[4].parse().map_err(|_| bad(n, "length"))?;
        let want = shape.iter().product::<usize>() as u64 * dtype.size_in_bytes() as u64;
        if bytes != want || offset + bytes > blob_len {
            return Err(bad(n, "length does not match shape or blob"));
        }
        out.push(IndexEntry {
            name: cols[0].to_string(),
            dtype,
            shape,
            offset,
            bytes,
        });
    }
    Ok(out)
}

/// Loads every tensor, checking the blob digest first.
pub fn load_tensors(dir: &Path) -> Result<(Manifest, BTreeMap<String, Tensor>)> {
    let manifest = read_manifest(dir)?;
    let blob_path = dir.join(&manifest.blob.file);
    let blob = std::fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    if blob.len() as u64 != manifest.blob.bytes || hex::encode(Sha256::digest(&blob)) != manifest.blob.sha256 {
        return Err(Error::Version(format!(
            "{} does not match its manifest (integrity check failed)",
            blob_path.display()
        )));
    }
    let index_path = dir.join(INDEX_FILE);
    let index = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let mut out = BTreeMap::new();
    for e in parse_index(&index, blob.len() as u64)? {
        let bytes = &blob[e.offset as usize..(e.offset + e.bytes) as usize];
        out.insert(e.name.clone(), tensor_from_bytes(bytes, e.dtype, &e.shape)?);
    }
    Ok((manifest, out))
}

fn take(tensors: &mut BTreeMap<String, Tensor>, name: &str, like: &Tensor) -> Result<Tensor> {
    let t = tensors
        .remove(name)
        .ok_or_else(|| Error::Version(format!("checkpoint lacks tensor {name}")))?;
    if t.dims() != like.dims() || t.dtype() != like.dtype() {
        return Err(Error::Version(format!(
            "tensor {name}: stored {:?} {:?}, model wants {:?} {:?}",
            t.dtype(),
            t.dims(),
            like.dtype(),
            like.dims()
        )));
    }
    Ok(t)
}

/// Rebuilds the full training state from `dir`.
pub fn load_checkpoint(dir: &Path) -> Result<TrainState> {
    let (manifest, mut tensors) = load_tensors(dir)?;
    let dtype = parse_dtype(&manifest.dtype)?;
    let mut state = TrainState::new(&manifest.config, dtype)?;
    let model: &mut FblNet = &mut state.model;
    for (name, var) in model.store.vars() {
        var.set(&take(&mut tensors, name, var.as_tensor())?)?;
    }
    for (name, buf) in model.store.buffers() {
        buf.set(take(&mut tensors, name, &buf.get())?);
    }
    model.knowledge.k = take(&mut tensors, "knowledge.K", &model.knowledge.k)?;
    model.knowledge.iteration = manifest.knowledge_iteration;
    let u = &mut model.knowledge.update;
    u.conv_weight = take(&mut tensors, "knowledge.update.conv.weight", &u.conv_weight)?;
    u.conv_bias = take(&mut tensors, "knowledge.update.conv.bias", &u.conv_bias)?;
    u.bn_gamma = take(&mut tensors, "knowledge.update.bn.gamma", &u.bn_gamma)?;
    u.bn_beta = take(&mut tensors, "knowledge.update.bn.beta", &u.bn_beta)?;
    u.running_mean = crate::nn::Buffer::new(take(&mut tensors, "knowledge.update.bn.running_mean", &u.running_mean.get())?);
    u.running_var = crate::nn::Buffer::new(take(&mut tensors, "knowledge.update.bn.running_var", &u.running_var.get())?);

    for (name, steps) in &manifest.optimizer_steps {
        let var = model
            .store
            .vars()
            .get(name)
            .ok_or_else(|| Error::Version(format!("optimizer state for unknown parameter {name}")))?;
        let like = var.as_tensor();
        let m = take(&mut tensors, &format!("optim.m.{name}"), like)?;
        let v = take(&mut tensors, &format!("optim.v.{name}"), like)?;
        state.optim.state.insert(name.clone(), AdamSlot { m, v, steps: *steps });
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Version(format!("checkpoint has unexpected tensor {extra}")));
    }
    state.step = manifest.step;
    Ok(state)
}
