//! Binary formats.
//!
//! Weight container:
//!
//! ```text
//! "EUNW1" | u32 LE manifest length | manifest JSON (UTF-8) | f32 LE blob
//! ```
//!
//! The manifest echoes the network spec and lists every entry with its name,
//! shape and byte offset into the blob, in network order.
//!
//! Raw tensor: `"EUTN" | u32 LE rank | rank × u32 LE dims | f32 LE payload`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Network, NetworkSpec, Tensor, WeightEntry, Weights};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &str = "EUNW1";
pub const TENSOR_MAGIC: &str = "EUTN";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    magic: String,
    spec: Option<NetworkSpec>,
    entries: Vec<ManifestEntry>,
    blob_bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

fn check_magic(bytes: &[u8], magic: &'static str) -> Result<()> {
    let n = magic.len().min(bytes.len());
    if &bytes[..n] != magic.as_bytes() || bytes.len() < magic.len() {
        return Err(Error::BadMagic {
            expected: magic,
            found: String::from_utf8_lossy(&bytes[..n]).into_owned(),
        });
    }
    Ok(())
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let slice = bytes.get(at..at + 4).ok_or(Error::TruncatedBlob {
        needed: at as u64 + 4,
        available: bytes.len() as u64,
    })?;
    Ok(u32::from_le_bytes(slice.try_into().expect("4 bytes")))
}

impl Weights {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let entries = self
            .entries()
            .iter()
            .map(|e| {
                let m = ManifestEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    offset,
                };
                offset += 4 * e.data.len() as u64;
                m
            })
            .collect();
        let manifest = Manifest {
            magic: WEIGHTS_MAGIC.into(),
            spec: self.spec().cloned(),
            entries,
            blob_bytes: offset,
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(9 + json.len() + offset as usize);
        out.extend_from_slice(WEIGHTS_MAGIC.as_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for e in self.entries() {
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a container. When the manifest carries a spec, every entry is
    /// checked against the network that spec builds.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        check_magic(bytes, WEIGHTS_MAGIC)?;
        let len = read_u32(bytes, 5)? as usize;
        let header = 9 + len;
        let json = bytes.get(9..header).ok_or(Error::TruncatedBlob {
            needed: header as u64,
            available: bytes.len() as u64,
        })?;
        let manifest: Manifest =
            serde_json::from_slice(json).map_err(|e| Error::Manifest(e.to_string()))?;
        if manifest.magic != WEIGHTS_MAGIC {
            return Err(Error::BadMagic {
                expected: WEIGHTS_MAGIC,
                found: manifest.magic,
            });
        }
        if let Some(spec) = &manifest.spec {
            let params = Network::new(spec)?.params();
            let shell = Weights::from_entries(
                None,
                manifest
                    .entries
                    .iter()
                    .map(|e| WeightEntry {
                        name: e.name.clone(),
                        shape: e.shape.clone(),
                        data: vec![0.0; e.shape.iter().product()],
                    })
                    .collect(),
            )?;
            shell.check_against(&params)?;
        }

        let blob = &bytes[header..];
        let needed = manifest
            .entries
            .iter()
            .map(|e| e.offset + 4 * e.shape.iter().product::<usize>() as u64)
            .max()
            .unwrap_or(0)
            .max(manifest.blob_bytes);
        if (blob.len() as u64) < needed {
            return Err(Error::TruncatedBlob {
                needed,
                available: blob.len() as u64,
            });
        }
        let entries = manifest
            .entries
            .into_iter()
            .map(|e| {
                let n: usize = e.shape.iter().product();
                let start = e.offset as usize;
                let data = blob[start..start + 4 * n]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                WeightEntry {
                    name: e.name,
                    shape: e.shape,
                    data,
                }
            })
            .collect();
        Weights::from_entries(manifest.spec, entries)
    }
}

pub fn save_weights(weights: &Weights, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, weights.to_bytes())?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Weights> {
    Weights::from_bytes(&fs::read(path)?)
}

/// Loads weights and checks them against `spec` rather than the echoed one.
pub fn load_weights_for(path: impl AsRef<Path>, spec: &NetworkSpec) -> Result<Weights> {
    let w = load_weights(path)?;
    w.check_against(&Network::new(spec)?.params())?;
    Ok(w.with_spec(spec.clone()))
}

pub fn tensor_to_bytes(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(TENSOR_MAGIC.as_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    check_magic(bytes, TENSOR_MAGIC)?;
    let rank = read_u32(bytes, 4)? as usize;
    let shape = (0..rank)
        .map(|i| read_u32(bytes, 8 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 8 + 4 * rank;
    let n: usize = shape.iter().product();
    let needed = (start + 4 * n) as u64;
    if (bytes.len() as u64) < needed {
        return Err(Error::TruncatedBlob {
            needed,
            available: bytes.len() as u64,
        });
    }
    let data = bytes[start..start + 4 * n]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Tensor::from_vec(&shape, data)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, tensor_to_bytes(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    tensor_from_bytes(&fs::read(path)?)
}
