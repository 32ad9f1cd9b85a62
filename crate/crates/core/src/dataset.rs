//! Labelled vector datasets and the synthetic Gaussian-blob benchmark.
//!
//! On disk (little-endian):
//!
//! ```text
//! "CLMP" | version: u32 | n: u64 | d: u32 | num_classes: u32
//! n × d f32, row-major
//! n u16 labels
//! ```

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{ClampError, Result};
use crate::linalg::{distance, Matrix};
use crate::rng::rng_for;

pub const MAGIC: &[u8; 4] = b"CLMP";
pub const DATASET_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    num_classes: usize,
    data: Vec<f32>,
    labels: Vec<u16>,
}

impl Dataset {
    pub fn new(dim: usize, num_classes: usize, data: Vec<f32>, labels: Vec<u16>) -> Result<Self> {
        if dim == 0 {
            return Err(ClampError::validation("dataset dimension must be positive"));
        }
        if data.len() != labels.len() * dim {
            return Err(ClampError::validation(format!(
                "dataset has {} values for {} rows of width {dim}",
                data.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(ClampError::validation(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self { dim, num_classes, data, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    pub fn sample(&self, i: usize) -> Vec<f64> {
        self.data[i * self.dim..(i + 1) * self.dim].iter().map(|&v| v as f64).collect()
    }

    pub fn features(&self) -> Matrix {
        Matrix::from_vec(self.len(), self.dim, self.data.iter().map(|&v| v as f64).collect())
    }

    /// Row indices grouped by label.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len() + 2 * self.labels.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_classes as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err(format!("file is {} bytes, shorter than the header", bytes.len()));
        }
        if &bytes[..4] != MAGIC {
            return Err("bad magic".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != DATASET_VERSION {
            return Err(format!("unsupported dataset version {version}"));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let dim = u32_at(16) as usize;
        let classes = u32_at(20) as usize;
        let expected = n
            .checked_mul(dim)
            .and_then(|nd| nd.checked_mul(4))
            .and_then(|b| b.checked_add(2 * n + HEADER_LEN))
            .ok_or("header sizes overflow")?;
        if bytes.len() != expected {
            return Err(format!("file is {} bytes, header implies {expected}", bytes.len()));
        }
        let body = &bytes[HEADER_LEN..];
        let data =
            body[..4 * n * dim].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        let labels =
            body[4 * n * dim..].chunks_exact(2).map(|b| u16::from_le_bytes(b.try_into().unwrap())).collect();
        Dataset::new(dim, classes, data, labels).map_err(|e| e.to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.encode()))
            .map_err(|e| ClampError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        Self::decode(&bytes).map_err(|r| ClampError::format(path, r))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ClampError::io(path, e))?;
    Ok(bytes)
}

/// Git-style content hash: SHA-256 of `"blob <len>\0" ++ content`, hex encoded.
pub fn content_hash(path: &Path) -> Result<String> {
    let bytes = read_file(path)?;
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(&bytes);
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, Serialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Minimum distance between class centers, in units of the blob σ.
    pub separation: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self { classes: 10, per_class: 200, dim: 32, separation: 8.0, seed: 0 }
    }
}

/// Class centers whose closest pair is exactly `separation` apart.
pub fn blob_centers(spec: &BlobSpec) -> Result<Matrix> {
    if spec.classes < 2 || spec.classes > u16::MAX as usize {
        return Err(ClampError::validation(format!(
            "blobs need between 2 and {} classes, got {}",
            u16::MAX,
            spec.classes
        )));
    }
    if spec.dim == 0 || !(spec.separation > 0.0) {
        return Err(ClampError::validation("blob dimension and separation must be positive"));
    }
    let mut rng = rng_for(spec.seed, &[0xb10b, 0]);
    let data: Vec<f64> = (0..spec.classes * spec.dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut centers = Matrix::from_vec(spec.classes, spec.dim, data);
    let mut closest = f64::INFINITY;
    for i in 0..spec.classes {
        for j in (i + 1)..spec.classes {
            closest = closest.min(distance(centers.row(i), centers.row(j)));
        }
    }
    let scale = spec.separation / closest;
    centers.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    Ok(centers)
}

/// Isotropic unit-σ Gaussian blobs around [`blob_centers`]. Different
/// `split` values draw fresh samples around the same centers.
pub fn gen_blobs(spec: &BlobSpec, split: u64) -> Result<Dataset> {
    let centers = blob_centers(spec)?;
    let mut rng = rng_for(spec.seed, &[0xb10b, 1 + split]);
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.classes {
        for _ in 0..spec.per_class {
            for &mu in centers.row(c) {
                let z: f64 = rng.sample(StandardNormal);
                data.push((mu + z) as f32);
            }
            labels.push(c as u16);
        }
    }
    Dataset::new(spec.dim, spec.classes, data, labels)
}
