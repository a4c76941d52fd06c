//! Serialization of dynamically sized values into byte messages.
//!
//! Built-in format, all integers little-endian:
//!
//! - fundamentals: their fixed-width encoding (`bool` as one byte, 0 or 1)
//! - `String`: u64 byte length, then UTF-8 bytes
//! - `Vec<T>`: u64 element count, then each element
//! - `(A, B)`: `A` then `B`
//!
//! A serialized value travels as a single `BYTE` message. The receiver
//! learns its length from the envelope, allocates, and decodes, so receiving
//! always allocates.

use crate::communicator::{Communicator, Status};
use crate::error::{Error, Result};

/// Types that can be written into the built-in format.
pub trait Encode {
    fn encode(&self, out: &mut Vec<u8>);
}

/// Types that can be read back. `decode` advances `input` past the value.
pub trait Decode: Sized {
    fn decode(input: &mut &[u8]) -> Result<Self>;
}

pub fn to_bytes<T: Encode + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    value.encode(&mut out);
    out
}

/// Decodes one value that must span all of `bytes`.
pub fn from_bytes<T: Decode>(mut bytes: &[u8]) -> Result<T> {
    let value = T::decode(&mut bytes)?;
    if !bytes.is_empty() {
        return Err(Error::invalid(format!("{} trailing bytes after value", bytes.len())));
    }
    Ok(value)
}

fn take<'a>(input: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if input.len() < n {
        return Err(Error::invalid(format!(
            "truncated {what}: need {n} bytes, {} left",
            input.len()
        )));
    }
    let (head, rest) = input.split_at(n);
    *input = rest;
    Ok(head)
}

fn decode_len(input: &mut &[u8], what: &str) -> Result<usize> {
    let n = u64::decode(input)?;
    usize::try_from(n)
        .ok()
        .filter(|&n| n <= input.len())
        .ok_or_else(|| Error::invalid(format!("{what} length {n} exceeds the {} remaining bytes", input.len())))
}

macro_rules! fixed {
    ($($t:ty)*) => {$(
        impl Encode for $t {
            fn encode(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
        }

        impl Decode for $t {
            fn decode(input: &mut &[u8]) -> Result<Self> {
                let raw = take(input, std::mem::size_of::<$t>(), stringify!($t))?;
                Ok(<$t>::from_le_bytes(raw.try_into().expect("exact width")))
            }
        }
    )*};
}

fixed!(i8 i16 i32 i64 u8 u16 u32 u64 f32 f64);

impl Encode for bool {
    fn encode(&self, out: &mut Vec<u8>) {
        out.push(*self as u8);
    }
}

impl Decode for bool {
    fn decode(input: &mut &[u8]) -> Result<Self> {
        match take(input, 1, "bool")?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::invalid(format!("invalid bool byte {b:#04x}"))),
        }
    }
}

impl Encode for str {
    fn encode(&self, out: &mut Vec<u8>) {
        (self.len() as u64).encode(out);
        out.extend_from_slice(self.as_bytes());
    }
}

impl Encode for String {
    fn encode(&self, out: &mut Vec<u8>) {
        self.as_str().encode(out)
    }
}

impl Decode for String {
    fn decode(input: &mut &[u8]) -> Result<Self> {
        let n = decode_len(input, "string")?;
        let raw = take(input, n, "string")?;
        String::from_utf8(raw.to_vec()).map_err(|e| Error::invalid(format!("string is not UTF-8: {e}")))
    }
}

impl<T: Encode> Encode for [T] {
    fn encode(&self, out: &mut Vec<u8>) {
        (self.len() as u64).encode(out);
        for item in self {
            item.encode(out);
        }
    }
}

impl<T: Encode> Encode for Vec<T> {
    fn encode(&self, out: &mut Vec<u8>) {
        self.as_slice().encode(out)
    }
}

impl<T: Decode> Decode for Vec<T> {
    fn decode(input: &mut &[u8]) -> Result<Self> {
        let n = u64::decode(input)?;
        // Never reserve more than the input could possibly describe.
        let mut out = Vec::with_capacity((n as usize).min(input.len()));
        for _ in 0..n {
            out.push(T::decode(input)?);
        }
        Ok(out)
    }
}

impl<A: Encode, B: Encode> Encode for (A, B) {
    fn encode(&self, out: &mut Vec<u8>) {
        self.0.encode(out);
        self.1.encode(out);
    }
}

impl<A: Decode, B: Decode> Decode for (A, B) {
    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok((A::decode(input)?, B::decode(input)?))
    }
}

impl Communicator<'_> {
    /// Encodes `value` and sends it as one `BYTE` message.
    pub fn send_serialized<T: Encode + ?Sized>(&mut self, value: &T, dest: u32, tag: i32) -> Result<()> {
        self.send_bytes(&to_bytes(value), dest, tag)
    }

    /// Receives a message of any length and decodes it. `Status::count` is
    /// the encoded size in bytes. Corrupt input is an `InvalidArgument`
    /// error.
    pub fn recv_serialized<T: Decode>(&mut self, source: u32, tag: i32) -> Result<(T, Status)> {
        let (bytes, status) = self.recv_bytes(source, tag)?;
        Ok((from_bytes(&bytes)?, status))
    }
}
