//! Canonical byte encoding of datatype trees and the 64-bit signature over it.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! Fundamental  0x01 code:u8 size:u32
//! Contiguous   0x02 count:u64 inner
//! Vector       0x03 count:u64 blocklength:u64 stride:i64 inner
//! Struct       0x04 nfields:u32 (offset:u64 inner)* extent:u64
//! ```
//!
//! The signature is FNV-1a 64 over that encoding, so every process computes
//! the same value for the same layout regardless of host.

use super::{DatatypeTree, FundamentalKind};
use crate::error::{Error, Result};

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

const TAG_FUNDAMENTAL: u8 = 0x01;
const TAG_CONTIGUOUS: u8 = 0x02;
const TAG_VECTOR: u8 = 0x03;
const TAG_STRUCT: u8 = 0x04;

const MAX_DECODE_DEPTH: usize = 32;

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    Fnv1a::new().update(bytes).finish()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    pub(crate) fn new() -> Self {
        Fnv1a(FNV_OFFSET_BASIS)
    }

    pub(crate) fn update(mut self, bytes: &[u8]) -> Self {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
        self
    }

    pub(crate) fn finish(self) -> u64 {
        self.0
    }
}

impl DatatypeTree {
    pub fn canonical_encoding(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            DatatypeTree::Fundamental(kind) => {
                out.push(TAG_FUNDAMENTAL);
                out.push(kind.code());
                out.extend_from_slice(&(kind.size() as u32).to_le_bytes());
            }
            DatatypeTree::Contiguous { count, inner } => {
                out.push(TAG_CONTIGUOUS);
                out.extend_from_slice(&(*count as u64).to_le_bytes());
                inner.encode_into(out);
            }
            DatatypeTree::Vector {
                count,
                blocklength,
                stride,
                inner,
            } => {
                out.push(TAG_VECTOR);
                out.extend_from_slice(&(*count as u64).to_le_bytes());
                out.extend_from_slice(&(*blocklength as u64).to_le_bytes());
                out.extend_from_slice(&stride.to_le_bytes());
                inner.encode_into(out);
            }
            DatatypeTree::Struct { fields, extent } => {
                out.push(TAG_STRUCT);
                out.extend_from_slice(&(fields.len() as u32).to_le_bytes());
                for (offset, inner) in fields {
                    out.extend_from_slice(&(*offset as u64).to_le_bytes());
                    inner.encode_into(out);
                }
                out.extend_from_slice(&(*extent as u64).to_le_bytes());
            }
        }
    }

    /// FNV-1a 64 of the canonical encoding.
    pub fn signature(&self) -> u64 {
        fnv1a64(&self.canonical_encoding())
    }

    /// Parses a canonical encoding and validates the resulting tree. The whole
    /// input must be consumed.
    pub fn from_canonical(bytes: &[u8]) -> Result<Self> {
        let mut reader = Reader { bytes, pos: 0 };
        let tree = reader.tree(0)?;
        if reader.pos != bytes.len() {
            return Err(Error::invalid(format!(
                "{} trailing bytes after datatype encoding",
                bytes.len() - reader.pos
            )));
        }
        tree.validate()?;
        Ok(tree)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.bytes.len())
            .ok_or_else(|| Error::invalid("datatype encoding ends early"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::invalid(format!("value {v} does not fit the host")))
    }

    fn tree(&mut self, depth: usize) -> Result<DatatypeTree> {
        if depth > MAX_DECODE_DEPTH {
            return Err(Error::invalid("datatype encoding nests too deeply"));
        }
        match self.u8()? {
            TAG_FUNDAMENTAL => {
                let code = self.u8()?;
                let kind = FundamentalKind::from_code(code)
                    .ok_or_else(|| Error::invalid(format!("unknown fundamental code {code}")))?;
                let size = self.u32()?;
                if size as usize != kind.size() {
                    return Err(Error::invalid(format!("{kind} declared with size {size}")));
                }
                Ok(DatatypeTree::Fundamental(kind))
            }
            TAG_CONTIGUOUS => {
                let count = self.usize()?;
                let inner = self.tree(depth + 1)?;
                DatatypeTree::contiguous(count, inner)
            }
            TAG_VECTOR => {
                let count = self.usize()?;
                let blocklength = self.usize()?;
                let stride = self.u64()? as i64;
                let inner = self.tree(depth + 1)?;
                DatatypeTree::vector(count, blocklength, stride, inner)
            }
            TAG_STRUCT => {
                let n = self.u32()? as usize;
                // Each field needs at least an offset and a fundamental node.
                if n > (self.bytes.len() - self.pos) / 14 {
                    return Err(Error::invalid("struct field count exceeds input"));
                }
                let mut fields = Vec::with_capacity(n);
                for _ in 0..n {
                    let offset = self.usize()?;
                    fields.push((offset, self.tree(depth + 1)?));
                }
                let extent = self.usize()?;
                DatatypeTree::struct_type(fields, extent)
            }
            other => Err(Error::invalid(format!("unknown datatype node tag {other:#04x}"))),
        }
    }
}
