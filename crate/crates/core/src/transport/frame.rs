//! TCP wire format.
//!
//! ```text
//! offset size field
//!      0    4 magic "SMPI"
//!      4    2 version (1)
//!      6    1 kind
//!      7    1 flags
//!      8    8 context_id
//!     16    4 source
//!     20    4 dest
//!     24    4 tag (signed)
//!     28    8 signature
//!     36    8 payload_len
//!     44    - payload
//! ```
//!
//! All integers are little-endian.

use super::{Envelope, FrameKind, Message, FLAG_SIGNATURE};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SMPI";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 44;

pub fn encode_header(env: &Envelope) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&MAGIC);
    h[4..6].copy_from_slice(&VERSION.to_le_bytes());
    h[6] = env.kind as u8;
    h[7] = env.flags;
    h[8..16].copy_from_slice(&env.context_id.to_le_bytes());
    h[16..20].copy_from_slice(&env.source.to_le_bytes());
    h[20..24].copy_from_slice(&env.dest.to_le_bytes());
    h[24..28].copy_from_slice(&env.tag.to_le_bytes());
    h[28..36].copy_from_slice(&env.signature.to_le_bytes());
    h[36..44].copy_from_slice(&env.payload_len.to_le_bytes());
    h
}

/// Header followed by payload. `envelope.payload_len` must equal the payload
/// length.
pub fn encode_frame(env: &Envelope, payload: &[u8]) -> Vec<u8> {
    debug_assert_eq!(env.payload_len, payload.len() as u64);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&encode_header(env));
    out.extend_from_slice(payload);
    out
}

/// Parses and validates a header. Payloads above `max_payload` are refused.
pub fn decode_header(bytes: &[u8], max_payload: u64) -> Result<Envelope> {
    let h: &[u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::invalid(format!("frame header needs {HEADER_LEN} bytes, got {}", bytes.len())))?;
    if h[0..4] != MAGIC {
        return Err(Error::invalid("bad frame magic"));
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != VERSION {
        return Err(Error::invalid(format!("unsupported frame version {version}")));
    }
    let kind = FrameKind::from_u8(h[6]).ok_or_else(|| Error::invalid(format!("unknown frame kind {}", h[6])))?;
    let flags = h[7];
    if flags & !FLAG_SIGNATURE != 0 {
        return Err(Error::invalid(format!("unknown frame flags {flags:#04x}")));
    }
    let u64_at = |at: usize| u64::from_le_bytes(h[at..at + 8].try_into().expect("8 bytes"));
    let u32_at = |at: usize| u32::from_le_bytes(h[at..at + 4].try_into().expect("4 bytes"));
    let signature = u64_at(28);
    if flags & FLAG_SIGNATURE == 0 && signature != 0 {
        return Err(Error::invalid("signature present without signature flag"));
    }
    let payload_len = u64_at(36);
    if payload_len > max_payload {
        return Err(Error::invalid(format!(
            "payload of {payload_len} bytes exceeds cap of {max_payload}"
        )));
    }
    Ok(Envelope {
        kind,
        flags,
        context_id: u64_at(8),
        source: u32_at(16),
        dest: u32_at(20),
        tag: u32_at(24) as i32,
        signature,
        payload_len,
    })
}

/// Reassembles frames from a byte stream.
#[derive(Debug)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    start: usize,
    max_payload: u64,
}

impl FrameDecoder {
    pub fn new(max_payload: u64) -> Self {
        FrameDecoder {
            buf: Vec::new(),
            start: 0,
            max_payload,
        }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        if self.start > 0 && self.start * 2 >= self.buf.len() {
            self.buf.drain(..self.start);
            self.start = 0;
        }
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len() - self.start
    }

    /// Next complete frame, `None` if more bytes are needed. A malformed header
    /// poisons the stream; callers should drop the connection.
    pub fn next_frame(&mut self) -> Result<Option<Message>> {
        let avail = &self.buf[self.start..];
        if avail.len() < HEADER_LEN {
            return Ok(None);
        }
        let envelope = decode_header(avail, self.max_payload)?;
        let total = HEADER_LEN + envelope.payload_len as usize;
        if avail.len() < total {
            return Ok(None);
        }
        let payload = avail[HEADER_LEN..total].to_vec();
        self.start += total;
        if self.start == self.buf.len() {
            self.buf.clear();
            self.start = 0;
        }
        Ok(Some(Message { envelope, payload }))
    }
}
