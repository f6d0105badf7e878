//! Binary tensor container.
//!
//! Layout: the 4-byte magic `DGPT`, a little-endian `u32` header length, a
//! UTF-8 JSON header, then the payload as little-endian `f64`.

use std::io::{Read, Write};

use serde_json::Value;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DGPT";

pub fn write_tensor<W: Write>(mut w: W, header: &Value, data: &[f64]) -> Result<()> {
    let head = serde_json::to_vec(header)?;
    let len = u32::try_from(head.len()).map_err(|_| Error::Budget("tensor header exceeds 4 GiB".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&head)?;
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<(Value, Vec<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config("not a DGPT tensor file".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut head = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut head)?;
    let header: Value = serde_json::from_slice(&head)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() % 8 != 0 {
        return Err(Error::Config(format!("tensor payload of {} bytes is not a multiple of 8", rest.len())));
    }
    let data = rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    Ok((header, data))
}
