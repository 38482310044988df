//! Checkpoint directory: `manifest.json` (plan, tensor table, dtype) plus
//! `weights.bin`, a single little-endian f32 blob.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::{instantiate, NetworkPlan};
use crate::error::{Error, Result};
use crate::nn::{Layer, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "weights.bin";
const DTYPE: &str = "f32";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
    /// Number of elements.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    pub blob_bytes: u64,
    pub plan: NetworkPlan,
    pub tensors: Vec<TensorEntry>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

/// Every stored tensor of `net` in a fixed order, including batchnorm running
/// statistics.
fn named_tensors<T>(net: &Network<T>) -> Vec<(String, &Tensor<T>)> {
    let mut out = Vec::new();
    for l in &net.layers {
        let n = &l.name;
        match &l.layer {
            Layer::Conv2d(c) => {
                out.push((format!("{n}.weight"), &c.weight));
                out.push((format!("{n}.bias"), &c.bias));
            }
            Layer::BatchNorm(b) => {
                out.push((format!("{n}.gamma"), &b.gamma));
                out.push((format!("{n}.beta"), &b.beta));
                out.push((format!("{n}.running_mean"), &b.running_mean));
                out.push((format!("{n}.running_var"), &b.running_var));
            }
            Layer::Dense(d) => {
                out.push((format!("{n}.weight"), &d.weight));
                out.push((format!("{n}.bias"), &d.bias));
            }
            _ => {}
        }
    }
    out
}

fn tensors_mut<T>(net: &mut Network<T>) -> Vec<&mut Tensor<T>> {
    let mut out = Vec::new();
    for l in &mut net.layers {
        match &mut l.layer {
            Layer::Conv2d(c) => out.extend([&mut c.weight, &mut c.bias]),
            Layer::BatchNorm(b) => out.extend([&mut b.gamma, &mut b.beta, &mut b.running_mean, &mut b.running_var]),
            Layer::Dense(d) => out.extend([&mut d.weight, &mut d.bias]),
            _ => {}
        }
    }
    out
}

/// Writes `net` (cast to f32) and its plan under `dir`.
pub fn save_checkpoint<T: Scalar>(dir: &Path, plan: &NetworkPlan, net: &Network<T>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for (name, t) in named_tensors(net) {
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
            len: t.len(),
        });
        for v in t.data() {
            blob.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dtype: DTYPE.into(),
        blob_bytes: blob.len() as u64,
        plan: plan.clone(),
        tensors,
    };
    std::fs::write(dir.join(BLOB_FILE), &blob)?;
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`]. Any disagreement between
/// the manifest, the plan and the blob is a [`Error::CorruptCheckpoint`].
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(NetworkPlan, Network<T>)> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))
        .map_err(|e| corrupt(format!("cannot read {MANIFEST_FILE}: {e}")))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| corrupt(format!("bad manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION || manifest.dtype != DTYPE {
        return Err(corrupt(format!(
            "unsupported format {} / dtype {}",
            manifest.format_version, manifest.dtype
        )));
    }
    let blob = std::fs::read(dir.join(BLOB_FILE)).map_err(|e| corrupt(format!("cannot read {BLOB_FILE}: {e}")))?;
    if blob.len() as u64 != manifest.blob_bytes {
        return Err(corrupt(format!(
            "blob holds {} bytes, manifest expects {}",
            blob.len(),
            manifest.blob_bytes
        )));
    }
    let mut net = instantiate::<T>(&manifest.plan, None).map_err(|e| corrupt(format!("plan does not build: {e}")))?;
    let expected: Vec<(String, Vec<usize>)> = named_tensors(&net)
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if expected.len() != manifest.tensors.len() {
        return Err(corrupt(format!(
            "plan has {} tensors, manifest lists {}",
            expected.len(),
            manifest.tensors.len()
        )));
    }
    for ((entry, (name, shape)), slot) in manifest.tensors.iter().zip(&expected).zip(tensors_mut(&mut net)) {
        if &entry.name != name || &entry.shape != shape || entry.len != shape.iter().product::<usize>() {
            return Err(corrupt(format!("tensor `{}` does not match the plan's `{name}` {shape:?}", entry.name)));
        }
        let start = entry.offset as usize;
        let end = start + entry.len * 4;
        let bytes = blob
            .get(start..end)
            .ok_or_else(|| corrupt(format!("tensor `{name}` lies outside the blob")))?;
        let values = bytes
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        *slot = Tensor::new(shape, values)?;
    }
    Ok((manifest.plan, net))
}
