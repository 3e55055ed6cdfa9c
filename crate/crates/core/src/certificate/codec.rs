//! Canonical length-prefixed binary encoding.
//!
//! Integers are big-endian, variable-length fields carry a `u32` length
//! prefix, and sequences a `u32` count. Every hashed or signed structure is
//! written through [`Writer`] so equal values always give equal bytes.

use super::CertError;

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn fixed(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.u32(bytes.len() as u32);
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn count(&mut self, n: usize) -> &mut Self {
        self.u32(n as u32)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CertError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or(CertError::Decode("unexpected end of input"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CertError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CertError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, CertError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], CertError> {
        Ok(self.take(N)?.try_into().expect("N bytes"))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, CertError> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    pub fn str(&mut self) -> Result<String, CertError> {
        String::from_utf8(self.bytes()?).map_err(|_| CertError::Decode("string is not utf-8"))
    }

    /// A sequence count, bounded by the remaining input so a corrupted
    /// prefix cannot trigger a huge allocation.
    pub fn count(&mut self) -> Result<usize, CertError> {
        let n = self.u32()? as usize;
        if n > self.buf.len() - self.pos {
            return Err(CertError::Decode("sequence count exceeds input"));
        }
        Ok(n)
    }

    pub fn finish(self) -> Result<(), CertError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(CertError::Decode("trailing bytes"))
        }
    }
}
