//! Little-endian section framing shared by the model and feature-matrix files.
//!
//! A file is `magic[4] | version u32 | section* | crc32 u32`. Each section is
//! `tag[4] | payload_len u64 | payload | crc32(payload) u32`. The trailing
//! CRC covers every byte before it.

use crate::error::{Error, Result};

pub(crate) struct SectionWriter {
    buf: Vec<u8>,
}

impl SectionWriter {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Self { buf }
    }

    pub fn section(&mut self, tag: &[u8; 4], payload: &Payload) {
        self.buf.extend_from_slice(tag);
        self.buf.extend_from_slice(&(payload.0.len() as u64).to_le_bytes());
        self.buf.extend_from_slice(&payload.0);
        self.buf.extend_from_slice(&crc32fast::hash(&payload.0).to_le_bytes());
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

#[derive(Default)]
pub(crate) struct Payload(Vec<u8>);

impl Payload {
    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.0.push(v);
        self
    }
    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn f64s(&mut self, vs: &[f64]) -> &mut Self {
        self.0.reserve(vs.len() * 8);
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
        self
    }
    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
        self
    }
}

pub(crate) struct SectionReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> SectionReader<'a> {
    /// Checks magic and version. `supported` is the one version this build reads.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4], supported: u32) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(Error::load("header", "bad magic"));
        }
        if bytes.len() < 8 {
            return Err(Error::load("header", "truncated before version"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != supported {
            return Err(Error::load(
                "header",
                format!("unsupported version {version} (this build reads version {supported})"),
            ));
        }
        Ok(Self { bytes, pos: 8 })
    }

    /// Reads the next section, which must carry `tag`.
    pub fn section(&mut self, tag: &[u8; 4]) -> Result<Cursor<'a>> {
        let name = String::from_utf8_lossy(tag).into_owned();
        let rest = &self.bytes[self.pos..];
        if rest.len() < 12 {
            return Err(Error::load(&name, "truncated section header"));
        }
        if &rest[..4] != tag {
            return Err(Error::load(
                &name,
                format!("expected tag {name}, found {:?}", String::from_utf8_lossy(&rest[..4])),
            ));
        }
        let len = u64::from_le_bytes(rest[4..12].try_into().unwrap());
        let len = usize::try_from(len)
            .ok()
            .filter(|&l| l <= rest.len().saturating_sub(16))
            .ok_or_else(|| Error::load(&name, "truncated payload"))?;
        let payload = &rest[12..12 + len];
        let stored = u32::from_le_bytes(rest[12 + len..16 + len].try_into().unwrap());
        if crc32fast::hash(payload) != stored {
            return Err(Error::load(&name, "checksum mismatch"));
        }
        self.pos += 16 + len;
        Ok(Cursor {
            name,
            bytes: payload,
            pos: 0,
        })
    }

    pub fn finish(self) -> Result<()> {
        let rest = &self.bytes[self.pos..];
        if rest.len() != 4 {
            return Err(Error::load(
                "trailer",
                format!("expected 4-byte file checksum, found {} bytes", rest.len()),
            ));
        }
        let stored = u32::from_le_bytes(rest.try_into().unwrap());
        if crc32fast::hash(&self.bytes[..self.pos]) != stored {
            return Err(Error::load("trailer", "file checksum mismatch"));
        }
        Ok(())
    }
}

pub(crate) struct Cursor<'a> {
    name: String,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::load(&self.name, "payload shorter than its contents"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.err(format!("length {v} overflows")))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.err("length overflows"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.err("string is not UTF-8"))
    }
    pub fn err(&self, message: impl Into<String>) -> Error {
        Error::load(&self.name, message)
    }
    pub fn end(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!("{} unread payload bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}
