//! Raw n-D tensor files: `SCTN` magic, `u32` version, `u32` rank, one `u64`
//! per extent, then the row-major `f64` values. Everything little-endian.

use std::path::Path;

use scsc_core::SpatialArray;

use crate::error::{PipelineError, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"SCTN";
pub const TENSOR_VERSION: u32 = 1;
pub const TENSOR_EXTENSION: &str = "tensor";

/// Output file name for an input named `name`: `<name>.tensor`, unless it
/// already is a tensor file.
pub fn file_name_for(name: &str) -> String {
    if name.ends_with(&format!(".{TENSOR_EXTENSION}")) {
        name.to_string()
    } else {
        format!("{name}.{TENSOR_EXTENSION}")
    }
}

pub fn encode(a: &SpatialArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * a.shape().len() + 8 * a.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(a.shape().len() as u32).to_le_bytes());
    for &e in a.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for v in a.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> std::result::Result<&'a [u8], String> {
    let end = at.checked_add(n).filter(|&e| e <= bytes.len()).ok_or("truncated tensor file")?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<SpatialArray, String> {
    let mut at = 0;
    if take(bytes, &mut at, 4)? != TENSOR_MAGIC {
        return Err("not a tensor file (bad magic)".into());
    }
    let version = u32::from_le_bytes(take(bytes, &mut at, 4)?.try_into().unwrap());
    if version != TENSOR_VERSION {
        return Err(format!("unsupported tensor version {version}"));
    }
    let rank = u32::from_le_bytes(take(bytes, &mut at, 4)?.try_into().unwrap()) as usize;
    if rank == 0 || rank > 8 {
        return Err(format!("unsupported rank {rank}"));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let e = u64::from_le_bytes(take(bytes, &mut at, 8)?.try_into().unwrap());
        shape.push(usize::try_from(e).map_err(|_| "extent overflows usize")?);
    }
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or("tensor too large")?;
    let body = take(bytes, &mut at, len.checked_mul(8).ok_or("tensor too large")?)?;
    if at != bytes.len() {
        return Err("trailing bytes after tensor data".into());
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SpatialArray::new(shape, data).map_err(|e| e.to_string())
}

pub fn write(path: &Path, a: &SpatialArray) -> Result<()> {
    std::fs::write(path, encode(a)).map_err(|e| PipelineError::io(path, e))
}

pub fn read(path: &Path) -> Result<SpatialArray> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    decode(&bytes).map_err(|m| PipelineError::data(path, m))
}
