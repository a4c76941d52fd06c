//! Sessions and process sets: the root of every communication object.
//!
//! Nothing global exists. A [`Session`] binds one rank to a transport, and
//! groups and communicators borrow it, so it cannot be finalized or dropped
//! while any of them is alive.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::communicator::Communicator;
use crate::datatype::encoding::Fnv1a;
use crate::error::{AbortMode, AssertLevel, Error, Result};
use crate::pool::TypePool;
use crate::runtime::Runtime;
use crate::transport::{Endpoint, InProcWorld, TcpConfig, TcpEndpoint};

/// Where a session's rank lives.
#[derive(Debug, Clone)]
pub enum Transport {
    /// A thread rank inside an [`InProcWorld`].
    InProc { world: Arc<InProcWorld>, rank: u32 },
    /// A process rank reached over TCP.
    Tcp(TcpConfig),
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub transport: Transport,
    pub assert_level: AssertLevel,
    /// Exit code used when a failed assertion aborts the job.
    pub abort_code: i32,
    pub abort_mode: AbortMode,
}

impl SessionConfig {
    /// Thread rank; aborts unwind the thread.
    pub fn inproc(world: &Arc<InProcWorld>, rank: u32) -> Self {
        SessionConfig {
            transport: Transport::InProc {
                world: Arc::clone(world),
                rank,
            },
            assert_level: AssertLevel::default(),
            abort_code: 1,
            abort_mode: AbortMode::Unwind,
        }
    }

    /// Process rank; aborts exit the process.
    pub fn tcp(config: TcpConfig) -> Self {
        SessionConfig {
            transport: Transport::Tcp(config),
            assert_level: AssertLevel::default(),
            abort_code: 1,
            abort_mode: AbortMode::Exit,
        }
    }

    pub fn with_assert_level(mut self, level: AssertLevel) -> Self {
        self.assert_level = level;
        self
    }

    pub fn with_abort_code(mut self, code: i32) -> Self {
        self.abort_code = code;
        self
    }

    pub fn with_abort_mode(mut self, mode: AbortMode) -> Self {
        self.abort_mode = mode;
        self
    }

    /// Reads `SMPI_TRANSPORT` (`inproc` or `tcp`, default `inproc`),
    /// `SMPI_RANK`, `SMPI_WORLD_SIZE`, `SMPI_COORD`, `SMPI_ASSERT_LEVEL` and
    /// `SMPI_ABORT_CODE`. Without a launcher this yields a one-rank world.
    pub fn from_env() -> Result<Self> {
        Self::from_vars(|name| std::env::var(name).ok())
    }

    pub fn from_vars(var: impl Fn(&str) -> Option<String>) -> Result<Self> {
        fn num<T: std::str::FromStr>(name: &str, value: Option<String>, default: T) -> Result<T> {
            match value {
                None => Ok(default),
                Some(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Bootstrap(format!("{name}={v:?} is not a valid number"))),
            }
        }
        let size: u32 = num("SMPI_WORLD_SIZE", var("SMPI_WORLD_SIZE"), 1)?;
        let rank: u32 = num("SMPI_RANK", var("SMPI_RANK"), 0)?;
        let transport = var("SMPI_TRANSPORT").unwrap_or_else(|| "inproc".into());
        let config = match transport.trim() {
            "inproc" => {
                if size != 1 || rank != 0 {
                    return Err(Error::Bootstrap(
                        "an in-process world larger than one rank must be created explicitly".into(),
                    ));
                }
                SessionConfig::inproc(&InProcWorld::new(1), 0)
            }
            "tcp" => {
                let coord = var("SMPI_COORD")
                    .ok_or_else(|| Error::Bootstrap("SMPI_COORD is required for the tcp transport".into()))?;
                SessionConfig::tcp(TcpConfig::new(rank, size, coord))
            }
            other => return Err(Error::Bootstrap(format!("unknown transport {other:?}"))),
        };
        let level = match var("SMPI_ASSERT_LEVEL") {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Bootstrap(format!("SMPI_ASSERT_LEVEL={v:?} is not in 0..=3")))?,
            None => AssertLevel::default(),
        };
        let code = num("SMPI_ABORT_CODE", var("SMPI_ABORT_CODE"), 1)?;
        Ok(config.with_assert_level(level).with_abort_code(code))
    }
}

/// One rank's handle on a job.
#[derive(Debug)]
pub struct Session {
    pub(crate) rt: Runtime,
    pool: TypePool,
    sequences: Mutex<HashMap<u64, u64>>,
}

/// Ordered set of world ranks. Immutable and duplicate-free.
#[derive(Debug, Clone)]
pub struct Group<'s> {
    session: &'s Session,
    members: Arc<[u32]>,
}

impl Session {
    pub fn init(config: SessionConfig) -> Result<Session> {
        let endpoint: Box<dyn Endpoint> = match config.transport {
            Transport::InProc { world, rank } => Box::new(world.endpoint(rank)?),
            Transport::Tcp(tcp) => Box::new(TcpEndpoint::connect(tcp)?),
        };
        Ok(Session {
            rt: Runtime::new(endpoint, config.assert_level, config.abort_code, config.abort_mode),
            pool: TypePool::new(config.assert_level),
            sequences: Mutex::new(HashMap::new()),
        })
    }

    /// [`Session::init`] with [`SessionConfig::from_env`].
    pub fn from_env() -> Result<Session> {
        Session::init(SessionConfig::from_env()?)
    }

    /// Rank within the world process set.
    pub fn world_rank(&self) -> u32 {
        self.rt.rank()
    }

    pub fn world_size(&self) -> u32 {
        self.rt.endpoint.world_size()
    }

    pub fn assert_level(&self) -> AssertLevel {
        self.rt.level
    }

    pub fn abort_code(&self) -> i32 {
        self.rt.abort_code
    }

    /// Frames this rank has handed to the transport.
    pub fn frames_sent(&self) -> u64 {
        self.rt.endpoint.stats().frames_sent()
    }

    /// Communicators of this rank that are still alive.
    pub fn live_contexts(&self) -> i64 {
        self.rt.endpoint.stats().live_contexts()
    }

    /// Messages that arrived at this rank and were never received.
    pub fn pending_messages(&self) -> usize {
        self.rt.endpoint.mailbox().pending()
    }

    /// `"mpi://WORLD"`: every launched rank in launch order.
    /// `"mpi://SELF"`: this rank alone.
    pub fn group_from_pset(&self, name: &str) -> Result<Group<'_>> {
        let members: Arc<[u32]> = match name {
            "mpi://WORLD" => (0..self.world_size()).collect(),
            "mpi://SELF" => Arc::from([self.world_rank()]),
            other => return Err(Error::invalid(format!("unknown process set {other:?}"))),
        };
        Ok(Group { session: self, members })
    }

    /// Shorthand for a communicator over `mpi://WORLD`.
    pub fn world(&self) -> Result<Communicator<'_>> {
        Communicator::from_group(&self.group_from_pset("mpi://WORLD")?)
    }

    pub fn type_pool(&self) -> &TypePool {
        &self.pool
    }

    /// Checks `pred` when `required` is enabled and aborts the job with the
    /// configured code if it fails. Neither closure runs when the level is
    /// disabled.
    pub fn check(&self, required: AssertLevel, pred: impl FnOnce() -> bool, diag: impl FnOnce() -> String) {
        self.rt.check(required, pred, diag)
    }

    /// Terminates every rank of the job with `code`.
    pub fn abort(&self, code: i32) -> ! {
        self.rt.abort(code)
    }

    /// Releases the session. Equivalent to dropping it; the type pool is
    /// closed and later lookups through retained pool handles fail.
    pub fn finalize(self) {}

    /// Deterministic context id for the next communicator over `members`.
    /// Every member derives the same value as long as all of them create
    /// communicators over that membership in the same order.
    pub(crate) fn next_context(&self, members: &[u32]) -> u64 {
        let mut sorted = members.to_vec();
        sorted.sort_unstable();
        let membership = sorted
            .iter()
            .fold(Fnv1a::new(), |h, m| h.update(&m.to_le_bytes()));
        let key = membership.finish();
        let seq = {
            let mut seqs = self.sequences.lock().unwrap_or_else(|e| e.into_inner());
            let slot = seqs.entry(key).or_insert(0);
            let seq = *slot;
            *slot += 1;
            seq
        };
        membership.update(&seq.to_le_bytes()).finish()
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.pool.close();
    }
}

impl<'s> Group<'s> {
    pub fn size(&self) -> u32 {
        self.members.len() as u32
    }

    /// This rank's index in the group, if it is a member.
    pub fn rank(&self) -> Option<u32> {
        let me = self.session.world_rank();
        self.members.iter().position(|&m| m == me).map(|i| i as u32)
    }

    /// World ranks of the members, in group order.
    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn session(&self) -> &'s Session {
        self.session
    }

    pub(crate) fn shared_members(&self) -> Arc<[u32]> {
        Arc::clone(&self.members)
    }
}
