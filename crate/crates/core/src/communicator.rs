use std::sync::Arc;

use crate::buffer::RecvBuffer;
use crate::error::{AssertLevel, Error, Result};
use crate::runtime::Runtime;
use crate::session::{Group, Session};
use crate::transport::{Envelope, FrameKind, MatchKey, Message, ANY_SOURCE};

/// An isolated communication context over a fixed set of ranks.
///
/// There is no `Clone`: a second handle on the same context can only come
/// from [`Communicator::duplicate`], which allocates a fresh context. Every
/// operation that sends or receives takes `&mut self`; only [`rank`] and
/// [`size`] are shared reads.
///
/// [`rank`]: Communicator::rank
/// [`size`]: Communicator::size
#[derive(Debug)]
pub struct Communicator<'s> {
    session: &'s Session,
    context_id: u64,
    members: Arc<[u32]>,
    rank: u32,
}

/// Metadata of a completed receive. `source` is a rank of the communicator;
/// `count` is in elements of the receive buffer's type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Status {
    pub source: u32,
    pub tag: i32,
    pub count: usize,
}

/// What a probe saw, without consuming it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeStatus {
    pub source: u32,
    pub tag: i32,
    pub bytes: u64,
}

const CREATE_MARKER: &[u8] = b"create";

impl<'s> Communicator<'s> {
    /// Creates a communicator over `group`. Every member must call this, in
    /// the same order relative to other creations over the same membership.
    /// At assert level 3 the members verify that they derived the same
    /// context id.
    pub fn from_group(group: &Group<'s>) -> Result<Communicator<'s>> {
        let session = group.session();
        let rank = group
            .rank()
            .ok_or_else(|| Error::invalid("calling rank is not a member of the group"))?;
        let members = group.shared_members();
        Self::create(session, members, rank)
    }

    fn create(session: &'s Session, members: Arc<[u32]>, rank: u32) -> Result<Communicator<'s>> {
        let context_id = session.next_context(&members);
        session.rt.endpoint.stats().context_opened();
        let mut comm = Communicator {
            session,
            context_id,
            members,
            rank,
        };
        if session.rt.level.enables(AssertLevel::Communication) {
            let mut sorted = comm.members.to_vec();
            sorted.sort_unstable();
            let setup = sorted
                .iter()
                .fold(crate::datatype::encoding::Fnv1a::new().update(CREATE_MARKER), |h, m| {
                    h.update(&m.to_le_bytes())
                })
                .finish();
            comm.context_id = setup;
            let agreed = comm.agree(0, &[context_id], "communicator context id");
            comm.context_id = context_id;
            agreed?;
        }
        Ok(comm)
    }

    /// A new communicator with the same members and a fresh context.
    /// Messages pending on `self` stay there. Collective, but not a barrier.
    pub fn duplicate(&mut self) -> Result<Communicator<'s>> {
        Self::create(self.session, Arc::clone(&self.members), self.rank)
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn size(&self) -> u32 {
        self.members.len() as u32
    }

    pub fn context_id(&self) -> u64 {
        self.context_id
    }

    pub fn session(&self) -> &'s Session {
        self.session
    }

    /// Terminates every rank of the job with `code`.
    pub fn abort(&self, code: i32) -> ! {
        self.session.abort(code)
    }

    pub(crate) fn rt(&self) -> &'s Runtime {
        &self.session.rt
    }

    pub(crate) fn members(&self) -> &Arc<[u32]> {
        &self.members
    }

    pub(crate) fn global(&self, rank: u32) -> u32 {
        if rank == ANY_SOURCE {
            ANY_SOURCE
        } else {
            self.members[rank as usize]
        }
    }

    /// Validates an argument: a failed level-1 assertion aborts; with
    /// assertions off the call fails with `InvalidArgument` instead.
    pub(crate) fn require(&self, ok: bool, diag: impl FnOnce() -> String) -> Result<()> {
        if ok {
            return Ok(());
        }
        let msg = diag();
        self.rt().check(AssertLevel::Local, || false, || msg.clone());
        Err(Error::InvalidArgument(msg))
    }

    pub(crate) fn require_rank(&self, rank: u32, what: &str) -> Result<()> {
        self.require(rank < self.size(), || {
            format!("{what} {rank} out of range for communicator of size {}", self.size())
        })
    }

    pub(crate) fn require_source(&self, source: u32) -> Result<()> {
        if source == ANY_SOURCE {
            Ok(())
        } else {
            self.require_rank(source, "source")
        }
    }

    pub(crate) fn signature_enabled(&self) -> bool {
        self.rt().level.enables(AssertLevel::Metadata)
    }

    pub(crate) fn send_raw(
        &self,
        kind: FrameKind,
        dest: u32,
        tag: i32,
        signature: Option<u64>,
        payload: &[u8],
    ) -> Result<()> {
        let mut env = Envelope::new(kind, self.context_id, self.members[self.rank as usize], self.global(dest), tag);
        if let Some(sig) = signature.filter(|_| self.signature_enabled()) {
            env = env.with_signature(sig);
        }
        self.rt().send(&env, payload).map_err(|e| localize(&self.members, e))
    }

    pub(crate) fn key(&self, kind: FrameKind, source: u32, tag: i32) -> MatchKey {
        let source = self.global(source);
        match kind {
            FrameKind::Collective => MatchKey::collective(self.context_id, source, tag),
            _ => MatchKey::new(self.context_id, source, tag),
        }
    }

    pub(crate) fn recv_raw(&self, kind: FrameKind, source: u32, tag: i32) -> Result<Message> {
        let key = self.key(kind, source, tag);
        self.rt()
            .wait_message(&key, &self.members)
            .map_err(|e| localize(&self.members, e))
    }

    pub(crate) fn probe_raw(&self, source: u32, tag: i32) -> Result<Envelope> {
        let key = self.key(FrameKind::Data, source, tag);
        self.rt()
            .wait_envelope(&key, &self.members)
            .map_err(|e| localize(&self.members, e))
    }
}

impl Drop for Communicator<'_> {
    fn drop(&mut self) {
        self.session.rt.endpoint.stats().context_closed();
    }
}

/// Communicator rank of a world rank.
pub(crate) fn local_rank(members: &[u32], global: u32) -> u32 {
    members
        .iter()
        .position(|&m| m == global)
        .map_or(global, |i| i as u32)
}

pub(crate) fn localize(members: &[u32], e: Error) -> Error {
    match e {
        Error::Disconnected { rank } => Error::Disconnected {
            rank: local_rank(members, rank),
        },
        other => other,
    }
}

/// Unpacks a received message into `buf`, applying the signature and
/// capacity checks.
pub(crate) fn deliver<B: RecvBuffer + ?Sized>(
    level: AssertLevel,
    members: &[u32],
    buf: &mut B,
    msg: &Message,
) -> Result<Status> {
    let info = buf.type_info();
    if level.enables(AssertLevel::Metadata) {
        if let Some(got) = msg.envelope.signature() {
            let expected = info.signature();
            if got != expected {
                return Err(Error::TypeMismatch { expected, got });
            }
        }
    }
    let actual = msg.payload.len();
    if actual > buf.packed_len() {
        return Err(Error::Truncation {
            actual_bytes: actual as u64,
        });
    }
    let count = buf.unpack_elements(0, &msg.payload)?;
    Ok(Status {
        source: local_rank(members, msg.envelope.source),
        tag: msg.envelope.tag,
        count,
    })
}
