//! Binary checkpoint container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "CLMP" | version: u32 | tensor count: u32
//! per tensor: name length: u32 | name bytes | rank: u32 | dims: u64 × rank | f64 × Π dims
//! ```
//!
//! A network is stored as `meta.split_index`, `meta.activations` (1 = ReLU,
//! 0 = identity) and `layer{k}.weight` / `layer{k}.bias` for every layer.

use std::io::{Read, Write};
use std::path::Path;

use super::net::{Activation, DenseNet, Layer};
use crate::error::{ClampError, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"CLMP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

pub fn encode_tensors(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for d in &t.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("truncated at byte {}", self.pos)),
        }
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> std::result::Result<Vec<Tensor>, String> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = String::from_utf8(c.take(name_len)?.to_vec()).map_err(|e| e.to_string())?;
        let rank = c.u32()? as usize;
        let dims = (0..rank).map(|_| c.u64()).collect::<std::result::Result<Vec<_>, _>>()?;
        let len =
            dims.iter().try_fold(1u64, |a, &d| a.checked_mul(d)).ok_or("tensor size overflows")? as usize;
        let raw = c.take(len.checked_mul(8).ok_or("tensor size overflows")?)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        tensors.push(Tensor { name, dims, data });
    }
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    Ok(tensors)
}

pub fn net_to_tensors(net: &DenseNet) -> Vec<Tensor> {
    let mut out = vec![
        Tensor { name: "meta.split_index".into(), dims: vec![1], data: vec![net.split_index() as f64] },
        Tensor {
            name: "meta.activations".into(),
            dims: vec![net.layers().len() as u64],
            data: net
                .layers()
                .iter()
                .map(|l| match l.activation {
                    Activation::Relu => 1.0,
                    Activation::Identity => 0.0,
                })
                .collect(),
        },
    ];
    for (k, l) in net.layers().iter().enumerate() {
        out.push(Tensor {
            name: format!("layer{k}.weight"),
            dims: vec![l.out_dim() as u64, l.in_dim() as u64],
            data: l.weights.as_slice().to_vec(),
        });
        out.push(Tensor {
            name: format!("layer{k}.bias"),
            dims: vec![l.out_dim() as u64],
            data: l.bias.clone(),
        });
    }
    out
}

pub fn net_from_tensors(tensors: &[Tensor]) -> std::result::Result<DenseNet, String> {
    let find =
        |name: &str| tensors.iter().find(|t| t.name == name).ok_or_else(|| format!("missing tensor {name}"));
    let split = find("meta.split_index")?.data.first().copied().ok_or("empty split index")? as usize;
    let acts = &find("meta.activations")?.data;
    let mut layers = Vec::with_capacity(acts.len());
    for (k, &a) in acts.iter().enumerate() {
        let w = find(&format!("layer{k}.weight"))?;
        let b = find(&format!("layer{k}.bias"))?;
        if w.dims.len() != 2 || b.dims.len() != 1 {
            return Err(format!("layer {k} has malformed tensor ranks"));
        }
        layers.push(Layer {
            weights: Matrix::from_vec(w.dims[0] as usize, w.dims[1] as usize, w.data.clone()),
            bias: b.data.clone(),
            activation: if a == 1.0 { Activation::Relu } else { Activation::Identity },
        });
    }
    DenseNet::from_layers(layers, split).map_err(|e| e.to_string())
}

pub fn save_checkpoint(net: &DenseNet, path: &Path) -> Result<()> {
    let bytes = encode_tensors(&net_to_tensors(net));
    std::fs::File::create(path).and_then(|mut f| f.write_all(&bytes)).map_err(|e| ClampError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<DenseNet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ClampError::io(path, e))?;
    let tensors = decode_tensors(&bytes).map_err(|r| ClampError::format(path, r))?;
    net_from_tensors(&tensors).map_err(|r| ClampError::format(path, r))
}
