//! The binary code file shared by every tool that reads or writes codes.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes   "HAMSPC01"
//! width    u32       code width B in bits
//! count    u64       number of codes N
//! codes    N * B/8   bit 0 of byte 0 is code bit 0
//! ```
//!
//! Binary files carry no provenance, so writers place a JSON sidecar next to
//! them (`<file>.json`) holding the schema version, the role of the codes,
//! optional external ids and the producing configuration.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bitcode::{check_width, HashCode};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HAMSPC01";
pub const SCHEMA_VERSION: u32 = 1;

pub fn write_codes<W: Write>(mut w: W, bits: u32, codes: &[HashCode]) -> Result<()> {
    check_width(bits)?;
    if let Some(bad) = codes.iter().find(|c| c.bits() != bits) {
        return Err(Error::usage(format!(
            "code of width {} in a {bits}-bit file",
            bad.bits()
        )));
    }
    let io = |e| Error::io("writing code file", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&bits.to_le_bytes()).map_err(io)?;
    w.write_all(&(codes.len() as u64).to_le_bytes()).map_err(io)?;
    for c in codes {
        w.write_all(&c.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_codes<R: Read>(mut r: R) -> Result<(u32, Vec<HashCode>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("reading code file", e))?;
    decode_codes(&bytes)
}

pub fn decode_codes(bytes: &[u8]) -> Result<(u32, Vec<HashCode>)> {
    if bytes.len() < 20 {
        return Err(Error::format("code file shorter than its header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::format("bad magic, not a HAMSPC01 code file"));
    }
    let bits = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    check_width(bits).map_err(|_| Error::format(format!("unsupported width {bits} in header")))?;
    let per = (bits / 8) as usize;
    let body = &bytes[20..];
    let expected = (n as u128) * per as u128;
    if body.len() as u128 != expected {
        return Err(Error::format(format!(
            "header announces {n} codes ({expected} bytes) but body has {} bytes",
            body.len()
        )));
    }
    let codes = body
        .chunks_exact(per)
        .map(|chunk| HashCode::from_le_bytes(chunk, bits))
        .collect::<Result<Vec<_>>>()?;
    Ok((bits, codes))
}

pub fn save_codes(path: &Path, bits: u32, codes: &[HashCode]) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + codes.len() * (bits / 8) as usize);
    write_codes(&mut buf, bits, codes)?;
    fs::write(path, buf).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_codes(path: &Path) -> Result<(u32, Vec<HashCode>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_codes(&bytes)
}

/// Provenance record stored next to a code file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    /// What the codes are: `document`, `user`, `item` or `index`.
    pub role: String,
    pub bits: u32,
    pub count: u64,
    /// Substring count, present for persisted indexes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substrings: Option<u32>,
    /// External ids, one per code in file order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
    /// Configuration and seed of whatever produced the codes.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl Sidecar {
    pub fn new(role: &str, bits: u32, count: usize) -> Self {
        Sidecar {
            schema_version: SCHEMA_VERSION,
            role: role.to_string(),
            bits,
            count: count as u64,
            substrings: None,
            ids: None,
            provenance: serde_json::Value::Null,
        }
    }

    pub fn path_for(code_path: &Path) -> PathBuf {
        let mut s = code_path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    pub fn save(&self, code_path: &Path) -> Result<()> {
        let path = Self::path_for(code_path);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Loads the sidecar of `code_path`, or `None` when there is none.
    pub fn load(code_path: &Path) -> Result<Option<Self>> {
        let path = Self::path_for(code_path);
        match fs::read_to_string(&path) {
            Ok(text) => {
                let sidecar: Sidecar = serde_json::from_str(&text)?;
                if sidecar.schema_version != SCHEMA_VERSION {
                    return Err(Error::format(format!(
                        "{}: unsupported schema version {}",
                        path.display(),
                        sidecar.schema_version
                    )));
                }
                Ok(Some(sidecar))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(format!("reading {}", path.display()), e)),
        }
    }
}
