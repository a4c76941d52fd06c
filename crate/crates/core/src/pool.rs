//! Session-scoped registry of committed datatypes.
//!
//! Types are registered under a caller-chosen 64-bit identity token, for
//! example a hash of a host type id. Entries live exactly as long as the
//! owning session: once it is finalized the pool is closed and every
//! retained handle reports errors.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use crate::datatype::CommittedDatatype;
use crate::error::{AssertLevel, Error, Result};

#[derive(Debug, Default)]
struct Inner {
    types: RwLock<HashMap<u64, CommittedDatatype>>,
    closed: AtomicBool,
}

/// Cheap, cloneable handle to a session's type pool.
#[derive(Debug, Clone)]
pub struct TypePool {
    inner: Arc<Inner>,
    level: AssertLevel,
}

impl TypePool {
    pub(crate) fn new(level: AssertLevel) -> Self {
        TypePool {
            inner: Arc::default(),
            level,
        }
    }

    fn ensure_open(&self) -> Result<()> {
        if self.inner.closed.load(Ordering::Acquire) {
            Err(Error::invalid("type pool used after its session was finalized"))
        } else {
            Ok(())
        }
    }

    /// Registers `datatype` under `identity`. A second registration of the
    /// same identity is an error when assertions are enabled and replaces
    /// the entry when they are off.
    pub fn register(&self, identity: u64, datatype: CommittedDatatype) -> Result<()> {
        self.ensure_open()?;
        let mut types = self.inner.types.write().unwrap_or_else(|e| e.into_inner());
        if self.level.enables(AssertLevel::Local) && types.contains_key(&identity) {
            return Err(Error::invalid(format!("type identity {identity:#x} is already registered")));
        }
        types.insert(identity, datatype);
        Ok(())
    }

    /// The type registered under `identity`. The returned handle shares the
    /// pool's entry.
    pub fn lookup(&self, identity: u64) -> Result<CommittedDatatype> {
        self.ensure_open()?;
        self.inner
            .types
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&identity)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("no type registered under {identity:#x}")))
    }

    pub fn len(&self) -> usize {
        self.inner.types.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.load(Ordering::Acquire)
    }

    pub(crate) fn close(&self) {
        self.inner.closed.store(true, Ordering::Release);
        self.inner.types.write().unwrap_or_else(|e| e.into_inner()).clear();
    }
}
