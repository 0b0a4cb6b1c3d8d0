//! Flat binary tensor archive.
//!
//! ```text
//! b"AUGSEGCK"            magic, 8 bytes
//! u32 version            currently 1
//! u32 count              number of tensors
//! count times:
//!   u32 name_len, name   UTF-8
//!   u32 rank, rank * u32 dims
//!   prod(dims) * f32     values
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use super::NamedTensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"AUGSEGCK";
pub const VERSION: u32 = 1;

pub fn encode(tensors: &[NamedTensor<f32>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(field, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<NamedTensor<f32>>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::format("magic", "not a checkpoint"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format("version", format!("unsupported version {version}")));
    }
    let count = r.u32("count")? as usize;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let len = r.u32("name_len")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::format("name", "invalid UTF-8"))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        if rank > 8 {
            return Err(Error::format("rank", format!("{name}: rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel
            .filter(|n| n.checked_mul(4).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| Error::format("dims", format!("{name}: implausible shape {shape:?}")))?;
        let raw = r.take(numel * 4, "values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(NamedTensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::format("count", "trailing bytes after last tensor"));
    }
    Ok(tensors)
}

pub fn save(path: impl AsRef<Path>, tensors: &[NamedTensor<f32>]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(tensors)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<NamedTensor<f32>>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<NamedTensor<f32>> {
        vec![
            NamedTensor { name: "a.weight".into(), shape: vec![2, 1, 1, 2], data: vec![1.0, -0.5, 3.25, f32::MIN_POSITIVE] },
            NamedTensor { name: "optim.iter".into(), shape: vec![1], data: vec![17.0] },
            NamedTensor { name: "empty".into(), shape: vec![0], data: vec![] },
        ]
    }

    #[test]
    fn round_trip() {
        let t = sample();
        assert_eq!(decode(&encode(&t)).unwrap(), t);
    }

    #[test]
    fn header_layout() {
        let b = encode(&sample()[1..2]);
        assert_eq!(&b[..8], MAGIC);
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
        assert_eq!(&b[16..20], &10u32.to_le_bytes());
        assert_eq!(&b[b.len() - 4..], &17.0f32.to_le_bytes());
    }

    #[test]
    fn every_truncation_is_a_format_error() {
        let b = encode(&sample());
        for n in 0..b.len() {
            assert!(matches!(decode(&b[..n]), Err(Error::Format { .. })), "prefix {n}");
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut b = encode(&sample());
        b[9] = 7;
        assert!(matches!(decode(&b), Err(Error::Format { field, .. }) if field == "version"));
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(Error::Format { field, .. }) if field == "magic"));
    }
}
