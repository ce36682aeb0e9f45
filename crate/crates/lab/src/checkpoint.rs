//! Network checkpoints (`.rzlb`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"RZLB"                    magic
//! u32                        format version (1)
//! u32                        length L of the JSON header
//! [u8; L]                    {"input": FeatureShape, "layers": [LayerSpec], "meta": {...}}
//! per layer, in order:
//!   u64 n, [f64; n]          weights
//!   u64 m, [f64; m]          biases
//! ```
//!
//! Parameter-free layers store two empty arrays. Values are written with
//! `f64::to_le_bytes`, so a save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rawzero_core::nn::{FeatureShape, LayerSpec, Network, Parameters};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 4] = b"RZLB";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    input: FeatureShape,
    layers: Vec<LayerSpec>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

pub fn encode(net: &Network, meta: &BTreeMap<String, String>) -> Vec<u8> {
    let header = Header { input: net.input_shape(), layers: net.specs(), meta: meta.clone() };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * net.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in net.parameters() {
        for values in [&p.weight, &p.bias] {
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(LabError::format(self.path, format!("checkpoint truncated at byte {}", self.at)));
        };
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        let n = usize::try_from(n).map_err(|_| LabError::format(self.path, "array length overflows"))?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| LabError::format(self.path, "array length overflows"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(Network, BTreeMap<String, String>)> {
    let mut c = Cursor { bytes, at: 0, path };
    if c.take(4)? != MAGIC {
        return Err(LabError::format(path, "not a checkpoint (bad magic)"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(LabError::format(path, format!("unsupported checkpoint version {version}")));
    }
    let len = c.u32()? as usize;
    let header: Header =
        serde_json::from_slice(c.take(len)?).map_err(|e| LabError::format(path, format!("checkpoint header: {e}")))?;
    let mut params = Vec::with_capacity(header.layers.len());
    for _ in &header.layers {
        let weight = c.f64s()?;
        let bias = c.f64s()?;
        params.push(Parameters { weight, bias });
    }
    if c.at != bytes.len() {
        return Err(LabError::format(path, format!("{} trailing bytes", bytes.len() - c.at)));
    }
    let net = Network::from_parameters(header.input, &header.layers, params)
        .map_err(|e| LabError::format(path, e.to_string()))?;
    Ok((net, header.meta))
}

pub fn save(path: &Path, net: &Network, meta: &BTreeMap<String, String>) -> Result<()> {
    fs::write(path, encode(net, meta)).map_err(|e| LabError::io(path, e))
}

pub fn load(path: &Path) -> Result<(Network, BTreeMap<String, String>)> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    decode(&bytes, path)
}
