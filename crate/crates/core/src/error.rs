//! Recoverable errors, assertion levels and the abort payload.
//!
//! Every fallible library call returns [`Result`]. Conditions that are
//! recoverable (truncation, type mismatch, a peer going away, bad input) are
//! plain values. Failed runtime assertions are not: they abort every rank of
//! the job, see [`crate::Session::abort`].

use std::fmt;
use std::str::FromStr;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// The incoming payload was larger than the posted receive. The message is
    /// consumed; `actual_bytes` is its full packed size.
    #[error("message truncated: {actual_bytes} bytes arrived")]
    Truncation { actual_bytes: u64 },
    #[error("type signature mismatch: expected {expected:#018x}, got {got:#018x}")]
    TypeMismatch { expected: u64, got: u64 },
    #[error("rank {rank} disconnected")]
    Disconnected { rank: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bootstrap failed: {0}")]
    Bootstrap(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// All error values are recoverable. Fatal conditions never surface as an
    /// `Error`; they abort instead.
    pub fn is_recoverable(&self) -> bool {
        true
    }
}

/// Runtime checking tier. Checks enabled at a level include all lower ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum AssertLevel {
    Off = 0,
    /// Cheap local checks: ranks, tags, request state, argument validity.
    #[default]
    Local = 1,
    /// Checks that use extra envelope metadata (type signatures).
    Metadata = 2,
    /// Checks that need extra communication (collective argument consistency).
    Communication = 3,
}

impl AssertLevel {
    pub fn from_u8(level: u8) -> Option<Self> {
        match level {
            0 => Some(AssertLevel::Off),
            1 => Some(AssertLevel::Local),
            2 => Some(AssertLevel::Metadata),
            3 => Some(AssertLevel::Communication),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn enables(self, required: AssertLevel) -> bool {
        self >= required
    }
}

impl FromStr for AssertLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .parse::<u8>()
            .ok()
            .and_then(AssertLevel::from_u8)
            .ok_or_else(|| Error::invalid(format!("assert level must be 0..=3, got {s:?}")))
    }
}

impl fmt::Display for AssertLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Panic payload carried by a rank that was aborted while running with
/// [`AbortMode::Unwind`]. Launchers running ranks as threads downcast to it
/// to recover the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Aborted {
    pub code: i32,
    pub rank: u32,
}

/// How a rank terminates once an abort has been raised or received.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AbortMode {
    /// Exit the process with the abort code. Right for one rank per process.
    #[default]
    Exit,
    /// Unwind the calling thread with an [`Aborted`] payload. Right for ranks
    /// that are threads of one process.
    Unwind,
}

/// Extracts the abort code from a thread's panic payload, if it was an abort.
pub fn abort_code_of(payload: &(dyn std::any::Any + Send)) -> Option<i32> {
    payload.downcast_ref::<Aborted>().map(|a| a.code)
}
