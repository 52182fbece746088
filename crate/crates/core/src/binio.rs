//! Little-endian binary reading with byte-offset error reporting.

use std::io::Read;

use crate::error::{Result, SlpError};

/// Tracks the byte offset so every failure names where it happened.
pub(crate) struct OffsetReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> OffsetReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Reads `n` bytes; `n` is validated against the remaining input by
    /// reading, never by pre-allocating it all.
    pub fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(n.min(1 << 20));
        let start = self.offset;
        let got = (&mut self.inner).take(n as u64).read_to_end(&mut out)?;
        self.offset += got as u64;
        if got < n {
            return Err(SlpError::format(self.offset, format!("unexpected end of file while reading {what} (started at {start})")));
        }
        Ok(out)
    }

    pub fn exact<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        let mut filled = 0;
        while filled < N {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(SlpError::format(
                        self.offset + filled as u64,
                        format!("unexpected end of file while reading {what}"),
                    ))
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += N as u64;
        Ok(buf)
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.exact(what)?))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.exact(what)?))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.exact(what)?))
    }

    pub fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(SlpError::format(self.offset, "trailing bytes after the last record")),
        }
    }
}

