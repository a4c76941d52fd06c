use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{AbortMode, Aborted, AssertLevel, Error, Result};
use crate::transport::{Endpoint, Envelope, MatchKey, Message, PostId, ANY_SOURCE};

/// Progress budget per poll, in socket reads.
const BUDGET: usize = 64;

/// Everything a session shares with its communicators and requests.
pub(crate) struct Runtime {
    pub(crate) endpoint: Box<dyn Endpoint>,
    pub(crate) level: AssertLevel,
    pub(crate) abort_code: i32,
    pub(crate) mode: AbortMode,
    aborting: AtomicBool,
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runtime")
            .field("rank", &self.endpoint.rank())
            .field("world_size", &self.endpoint.world_size())
            .field("level", &self.level)
            .field("abort_code", &self.abort_code)
            .field("mode", &self.mode)
            .finish()
    }
}

impl Runtime {
    pub(crate) fn new(endpoint: Box<dyn Endpoint>, level: AssertLevel, abort_code: i32, mode: AbortMode) -> Self {
        Runtime {
            endpoint,
            level,
            abort_code,
            mode,
            aborting: AtomicBool::new(false),
        }
    }

    pub(crate) fn rank(&self) -> u32 {
        self.endpoint.rank()
    }

    /// Evaluates `pred` only when `required` is enabled; on failure prints
    /// `diag` and aborts the job with the configured code.
    pub(crate) fn check(&self, required: AssertLevel, pred: impl FnOnce() -> bool, diag: impl FnOnce() -> String) {
        if self.level.enables(required) && !pred() {
            eprintln!("smpi: rank {}: assertion failed: {}", self.rank(), diag());
            self.abort(self.abort_code);
        }
    }

    /// Notifies every other rank, then terminates this one. Only the first
    /// caller broadcasts.
    pub(crate) fn abort(&self, code: i32) -> ! {
        if !self.aborting.swap(true, Ordering::AcqRel) {
            self.endpoint.broadcast_abort(code);
        }
        self.terminate(code)
    }

    fn terminate(&self, code: i32) -> ! {
        match self.mode {
            AbortMode::Exit => {
                eprintln!("smpi: rank {} terminating with code {code}", self.rank());
                std::process::exit(code)
            }
            AbortMode::Unwind => std::panic::resume_unwind(Box::new(Aborted {
                code,
                rank: self.rank(),
            })),
        }
    }

    /// Terminates if an abort frame has arrived.
    pub(crate) fn poll_abort(&self) {
        if let Some(code) = self.endpoint.mailbox().abort_code() {
            self.aborting.store(true, Ordering::Release);
            self.terminate(code);
        }
    }

    pub(crate) fn send(&self, envelope: &Envelope, payload: &[u8]) -> Result<()> {
        self.poll_abort();
        self.endpoint.send_frame(envelope.dest, envelope, payload)
    }

    /// Drives progress once and reports whether `post` has completed.
    pub(crate) fn poll_post(&self, post: PostId) -> bool {
        self.endpoint.progress(BUDGET);
        self.poll_abort();
        self.endpoint.mailbox().is_completed(post)
    }

    /// Error for a receive that can no longer be satisfied, if any. `peers`
    /// are the world ranks a wildcard receive could still hear from.
    pub(crate) fn unreachable(&self, source: u32, peers: &[u32]) -> Option<u32> {
        let closed = |r: u32| r != self.rank() && self.endpoint.peer_closed(r);
        if source == ANY_SOURCE {
            let others: Vec<u32> = peers.iter().copied().filter(|&r| r != self.rank()).collect();
            (!others.is_empty() && others.iter().all(|&r| closed(r))).then(|| others[0])
        } else {
            closed(source).then_some(source)
        }
    }

    /// Blocks until a message matching `key` arrives and takes it. `key.source`
    /// is a world rank or the wildcard.
    pub(crate) fn wait_message(&self, key: &MatchKey, peers: &[u32]) -> Result<Message> {
        self.wait_until(|| self.endpoint.mailbox().take_match(key), key.source, peers)
    }

    /// Like [`Runtime::wait_message`] without consuming the message.
    pub(crate) fn wait_envelope(&self, key: &MatchKey, peers: &[u32]) -> Result<Envelope> {
        self.wait_until(|| self.endpoint.mailbox().peek_match(key), key.source, peers)
    }

    pub(crate) fn wait_post(&self, post: PostId, source: u32, peers: &[u32]) -> Result<Message> {
        self.wait_until(|| self.endpoint.mailbox().take_completed(post), source, peers)
            .inspect_err(|_| {
                self.endpoint.mailbox().cancel(post);
            })
    }

    fn wait_until<T>(&self, mut ready: impl FnMut() -> Option<T>, source: u32, peers: &[u32]) -> Result<T> {
        let mailbox = self.endpoint.mailbox();
        let mut spins = 0u32;
        loop {
            let generation = mailbox.generation();
            self.endpoint.progress(BUDGET);
            self.poll_abort();
            if let Some(v) = ready() {
                return Ok(v);
            }
            if let Some(rank) = self.unreachable(source, peers) {
                // A final look: the closing peer's last frames may have landed
                // in the same progress call.
                self.endpoint.progress(BUDGET);
                if let Some(v) = ready() {
                    return Ok(v);
                }
                return Err(Error::Disconnected { rank });
            }
            spins = spins.saturating_add(1);
            self.endpoint.idle(generation, spins);
        }
    }
}
