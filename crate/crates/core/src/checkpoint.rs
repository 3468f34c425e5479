//! Model checkpoints: a JSON header followed by a raw parameter blob.
//!
//! ```text
//! magic    8 bytes      "HSCKPT01"
//! hlen     u64          header length in bytes
//! header   hlen bytes   UTF-8 JSON (schema version, config, seed, epoch, shapes, vocabulary)
//! count    u64          number of parameters
//! params   count * f32  little-endian, in the owning model's documented order
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HSCKPT01";

pub fn encode<H: Serialize>(header: &H, params: &[f64]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(24 + header.len() + params.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    let short = || Error::format("checkpoint is truncated");
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::format("not a HSCKPT01 checkpoint"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16usize.checked_add(hlen).ok_or_else(short)?;
    let header_bytes = bytes.get(16..header_end).ok_or_else(short)?;
    let header: H = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::format(format!("checkpoint header: {e}")))?;
    let count_bytes = bytes.get(header_end..header_end + 8).ok_or_else(short)?;
    let count = u64::from_le_bytes(count_bytes.try_into().unwrap()) as usize;
    let body = &bytes[header_end + 8..];
    if body.len() != count.checked_mul(4).ok_or_else(short)? {
        return Err(Error::format(format!(
            "checkpoint announces {count} parameters but holds {} bytes",
            body.len()
        )));
    }
    let params = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((header, params))
}

pub fn save<H: Serialize>(path: &Path, header: &H, params: &[f64]) -> Result<()> {
    let bytes = encode(header, params)?;
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}
