//! Little-endian byte encoding and file helpers shared by the dataset and
//! checkpoint formats.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CueError, Result};

#[derive(Default)]
pub(crate) struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Writes a count as `u32`, failing if it does not fit.
    pub fn count(&mut self, v: usize, what: &str) -> Result<()> {
        let v = u32::try_from(v)
            .map_err(|_| CueError::InvalidArgument(format!("{what} {v} exceeds u32 range")))?;
        self.u32(v);
        Ok(())
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8], name: &'a str) -> Self {
        Self { buf, pos: 0, name }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CueError::Format(format!(
                "{}: truncated at byte {} (wanted {n} more, {} available)",
                self.name,
                self.pos,
                self.buf.len() - self.pos
            ))),
        }
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(CueError::Format(format!(
                "{}: bad magic {:?}, expected {:?}",
                self.name,
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub fn expect_version(&mut self, version: u32) -> Result<()> {
        let got = self.u32()?;
        if got != version {
            return Err(CueError::Format(format!(
                "{}: unsupported version {got}, expected {version}",
                self.name
            )));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| CueError::Format(format!("{}: payload size overflow", self.name)))?;
        let b = self.take(bytes)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    pub fn utf8(&mut self, n: usize) -> Result<String> {
        let b = self.take(n)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| CueError::Format(format!("{}: invalid UTF-8 string", self.name)))
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(CueError::Format(format!(
                "{}: {} trailing bytes",
                self.name,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CueError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CueError::io(path, e))
}

pub(crate) fn to_json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)
        .map_err(|e| CueError::InvalidArgument(format!("serialization failed: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_scalars() {
        let mut w = ByteWriter::new();
        w.bytes(b"ABCD");
        w.u32(7);
        w.u8(2);
        w.f64s(&[1.5, -0.0]);
        let buf = w.finish();
        let mut r = ByteReader::new(&buf, "t");
        r.expect_magic(b"ABCD").unwrap();
        r.expect_version(7).unwrap();
        assert_eq!(r.u8().unwrap(), 2);
        let v = r.f64s(2).unwrap();
        assert_eq!(v[0], 1.5);
        assert!(v[1].is_sign_negative());
        r.finish().unwrap();
    }

    #[test]
    fn truncation_is_a_format_error() {
        let mut r = ByteReader::new(&[1, 2], "t");
        assert_eq!(r.u32().unwrap_err().category(), "format");
    }
}
