//! Binary vector blob.
//!
//! ```text
//! magic    b"CPVX"            4 bytes
//! version  u32 LE             4 bytes
//! dim      u32 LE             4 bytes
//! count    u64 LE             8 bytes
//! payload  count * dim f32 LE, row-major
//! checksum u64 LE             FNV-1a 64 of the payload bytes
//! ```

use std::fs::{self, File};
use std::hash::Hasher;
use std::io::{BufWriter, Write};
use std::path::Path;

use fnv::FnvHasher;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CPVX";
pub const BLOB_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
pub const TRAILER_LEN: usize = 8;

/// Decoded blob contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Blob {
    pub fn count(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }
}

/// Exact encoded size of a blob holding `count` rows of `dim` floats.
pub fn encoded_len(dim: usize, count: usize) -> u64 {
    (HEADER_LEN + TRAILER_LEN) as u64 + 4 * dim as u64 * count as u64
}

pub fn encode(dim: usize, data: &[f32]) -> Result<Vec<u8>> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::InvalidRequest(format!(
            "{} floats do not form rows of dim {dim}",
            data.len()
        )));
    }
    let dim32 = u32::try_from(dim)
        .map_err(|_| Error::InvalidRequest(format!("dim {dim} does not fit in u32")))?;
    let count = (data.len() / dim) as u64;
    let mut out = Vec::with_capacity(encoded_len(dim, data.len() / dim) as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    let mut hasher = FnvHasher::default();
    for v in data {
        let bytes = v.to_le_bytes();
        hasher.write(&bytes);
        out.extend_from_slice(&bytes);
    }
    out.extend_from_slice(&hasher.finish().to_le_bytes());
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Blob> {
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(Error::CorruptIndex(format!(
            "blob is {} bytes, shorter than its framing",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::CorruptIndex("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BLOB_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: BLOB_VERSION,
        });
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let expected = (dim as u64)
        .checked_mul(count)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add((HEADER_LEN + TRAILER_LEN) as u64));
    if expected != Some(bytes.len() as u64) {
        return Err(Error::CorruptIndex(format!(
            "blob is {} bytes but header declares {count} rows of dim {dim}",
            bytes.len()
        )));
    }
    if dim == 0 && count > 0 {
        return Err(Error::CorruptIndex("zero dimension".into()));
    }
    let payload = &bytes[HEADER_LEN..bytes.len() - TRAILER_LEN];
    let stored = u64::from_le_bytes(bytes[bytes.len() - TRAILER_LEN..].try_into().unwrap());
    let mut hasher = FnvHasher::default();
    hasher.write(payload);
    if hasher.finish() != stored {
        return Err(Error::CorruptIndex("checksum mismatch".into()));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::CorruptIndex("non-finite vector component".into()));
    }
    Ok(Blob { dim, data })
}

pub fn write_blob(path: &Path, dim: usize, data: &[f32]) -> Result<()> {
    let bytes = encode(dim, data)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    w.get_ref().sync_all().map_err(|e| Error::io(path, e))
}

pub fn read_blob(path: &Path) -> Result<Blob> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
