//! Message delivery: envelopes, matching, and the two backends.
//!
//! Every rank owns a [`Mailbox`]. Arriving messages are matched against
//! posted receives first and queued otherwise; a receive takes the earliest
//! queued message whose context, source and tag satisfy its [`MatchKey`].
//! Queues are FIFO, so messages from one sender with equal context and tag are
//! never overtaken.
//!
//! There is no background progress by default. The TCP backend reads sockets
//! only inside [`Endpoint::progress`], which blocking calls and request
//! polling invoke.

pub mod bootstrap;
pub mod frame;
mod inproc;
mod mailbox;
mod tcp;

use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::time::Duration;

use crate::error::Result;

pub use frame::{FrameDecoder, HEADER_LEN, MAGIC, VERSION};
pub use inproc::{InProcEndpoint, InProcWorld};
pub use mailbox::{Mailbox, PostId};
pub use tcp::{TcpConfig, TcpEndpoint};

/// Wildcard source for receives and probes.
pub const ANY_SOURCE: u32 = 0xFFFF_FFFF;
/// Wildcard tag for receives and probes.
pub const ANY_TAG: i32 = -1;
/// First tag reserved for collective-internal traffic.
pub const RESERVED_TAG_BASE: i32 = 1 << 30;
/// Default cap on a single payload.
pub const DEFAULT_MAX_PAYLOAD: u64 = 1 << 30;

/// Frame kinds on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameKind {
    Data = 0,
    Collective = 1,
    Abort = 2,
}

impl FrameKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(FrameKind::Data),
            1 => Some(FrameKind::Collective),
            2 => Some(FrameKind::Abort),
            _ => None,
        }
    }
}

/// Envelope flag: `signature` holds a type signature.
pub const FLAG_SIGNATURE: u8 = 0x01;

/// Header of every message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Envelope {
    pub kind: FrameKind,
    pub flags: u8,
    pub context_id: u64,
    pub source: u32,
    pub dest: u32,
    pub tag: i32,
    pub signature: u64,
    pub payload_len: u64,
}

impl Envelope {
    pub fn new(kind: FrameKind, context_id: u64, source: u32, dest: u32, tag: i32) -> Self {
        Envelope {
            kind,
            flags: 0,
            context_id,
            source,
            dest,
            tag,
            signature: 0,
            payload_len: 0,
        }
    }

    pub fn with_signature(mut self, signature: u64) -> Self {
        self.flags |= FLAG_SIGNATURE;
        self.signature = signature;
        self
    }

    pub fn signature(&self) -> Option<u64> {
        (self.flags & FLAG_SIGNATURE != 0).then_some(self.signature)
    }
}

/// An envelope with its payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub envelope: Envelope,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new(mut envelope: Envelope, payload: Vec<u8>) -> Self {
        envelope.payload_len = payload.len() as u64;
        Message { envelope, payload }
    }

    pub fn abort(source: u32, dest: u32, code: i32) -> Self {
        Message::new(
            Envelope::new(FrameKind::Abort, 0, source, dest, 0),
            code.to_le_bytes().to_vec(),
        )
    }

    /// Exit code carried by an abort frame.
    pub fn abort_code(&self) -> Option<i32> {
        if self.envelope.kind != FrameKind::Abort {
            return None;
        }
        Some(
            self.payload
                .get(..4)
                .map(|b| i32::from_le_bytes(b.try_into().expect("4 bytes")))
                .unwrap_or(1),
        )
    }
}

/// What a receive or probe is looking for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchKey {
    pub kind: FrameKind,
    pub context_id: u64,
    pub source: u32,
    pub tag: i32,
}

impl MatchKey {
    pub fn new(context_id: u64, source: u32, tag: i32) -> Self {
        MatchKey {
            kind: FrameKind::Data,
            context_id,
            source,
            tag,
        }
    }

    pub fn collective(context_id: u64, source: u32, tag: i32) -> Self {
        MatchKey {
            kind: FrameKind::Collective,
            ..MatchKey::new(context_id, source, tag)
        }
    }

    pub fn matches(&self, env: &Envelope) -> bool {
        env.kind == self.kind
            && env.context_id == self.context_id
            && (self.source == ANY_SOURCE || env.source == self.source)
            && (self.tag == ANY_TAG || env.tag == self.tag)
    }
}

/// Something that happened during [`Endpoint::progress`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    /// A message arrived and completed a posted receive.
    Completed { post: PostId },
    /// A message arrived and was queued.
    Queued { context_id: u64, source: u32, tag: i32 },
    /// An abort frame arrived.
    Abort { code: i32 },
    /// A peer's connection closed. Carries the peer's world rank.
    Disconnected { rank: u32 },
}

/// Per-endpoint counters.
#[derive(Debug, Default)]
pub struct TransportStats {
    frames_sent: AtomicU64,
    live_contexts: AtomicI64,
}

impl TransportStats {
    pub fn frames_sent(&self) -> u64 {
        self.frames_sent.load(Ordering::Relaxed)
    }

    pub fn live_contexts(&self) -> i64 {
        self.live_contexts.load(Ordering::Relaxed)
    }

    pub(crate) fn count_frame(&self) {
        self.frames_sent.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn context_opened(&self) {
        self.live_contexts.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn context_closed(&self) {
        self.live_contexts.fetch_sub(1, Ordering::Relaxed);
    }
}

/// One rank's attachment to a transport. Ranks here are world ranks.
pub trait Endpoint: Send + Sync {
    fn rank(&self) -> u32;

    fn world_size(&self) -> u32;

    fn mailbox(&self) -> &Mailbox;

    fn stats(&self) -> &TransportStats;

    /// Delivers one frame to `dest`. The payload length is taken from
    /// `payload`. Sends to self go straight to the local mailbox.
    fn send_frame(&self, dest: u32, envelope: &Envelope, payload: &[u8]) -> Result<()>;

    /// Performs at most `budget` units of I/O and reports what happened.
    fn progress(&self, budget: usize) -> Vec<Event>;

    /// True once the connection from `rank` has closed.
    fn peer_closed(&self, rank: u32) -> bool;

    /// Best-effort delivery of an abort frame to every other rank.
    fn broadcast_abort(&self, code: i32);

    /// Waits a little for new input. `generation` is the mailbox generation
    /// observed before the caller last checked its condition.
    fn idle(&self, generation: u64, spins: u32);
}

pub(crate) fn backoff(spins: u32) -> Duration {
    if spins < 16 {
        Duration::ZERO
    } else if spins < 256 {
        Duration::from_micros(20)
    } else {
        Duration::from_micros(200)
    }
}
