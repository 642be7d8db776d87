//! Checkpoint container.
//!
//! Layout: one line of compact JSON (the header, terminated by `\n`), then a
//! blob of little-endian `f64` values holding every tensor in header order.
//! The header carries the tensor names and shapes, free-form metadata, the
//! blob length in bytes and the SHA-256 of the blob.

use psim_core::io::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FORMAT: &str = "psim-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub tensors: Vec<TensorEntry>,
    pub blob_len: usize,
    pub blob_sha256: String,
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

pub fn encode(meta: serde_json::Value, tensors: &[(String, &Tensor)]) -> Vec<u8> {
    let mut blob = Vec::with_capacity(tensors.iter().map(|(_, t)| t.len() * 8).sum());
    for (_, t) in tensors {
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        format: FORMAT.to_string(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        blob_len: blob.len(),
        blob_sha256: sha256_hex(&blob),
        meta,
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(&blob);
    out
}

/// Reads the header alone.
pub fn decode_header(bytes: &[u8]) -> Result<(Header, usize)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header terminator".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])?;
    if header.format != FORMAT {
        return Err(Error::Checkpoint(format!("unknown format {:?}", header.format)));
    }
    Ok((header, nl + 1))
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let (header, start) = decode_header(bytes)?;
    let blob = &bytes[start..];
    let actual = sha256_hex(blob);
    if actual != header.blob_sha256 {
        return Err(Error::Integrity {
            expected: header.blob_sha256,
            actual,
        });
    }
    if blob.len() != header.blob_len || !blob.len().is_multiple_of(8) {
        return Err(Error::Checkpoint(format!(
            "blob has {} bytes, header says {}",
            blob.len(),
            header.blob_len
        )));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        if data.len() != n {
            return Err(Error::Checkpoint(format!("blob too short for {}", e.name)));
        }
        tensors.push((e.name.clone(), Tensor::from_vec(&e.shape, data)?));
    }
    if values.next().is_some() {
        return Err(Error::Checkpoint("trailing values in blob".into()));
    }
    Ok(Checkpoint {
        meta: header.meta,
        tensors,
    })
}
