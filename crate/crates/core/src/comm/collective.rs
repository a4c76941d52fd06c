//! Collectives built on point-to-point frames of kind `Collective`, tagged
//! from [`RESERVED_TAG_BASE`] upwards so user traffic can never match them.
//!
//! | operation | algorithm | frames sent per rank |
//! |-----------|-----------|----------------------|
//! | barrier   | dissemination | ⌈log2 n⌉ |
//! | broadcast | binomial tree | children in the tree |
//! | reduce    | linear to root, folded in ascending rank order | 1 (0 at root) |
//! | allreduce | reduce to 0, then broadcast | sum of both |
//! | alltoallv | n − 1 direct sends plus a local copy | n − 1 |
//!
//! Assert level 3 adds an agreement round before each collective.

use super::op::{ReduceOp, ReductionOp};
use crate::buffer::{DataBuffer, Elements, Irregular, RecvBuffer, SendBuffer};
use crate::communicator::Communicator;
use crate::datatype::{Fundamental, FundamentalKind};
use crate::error::{AssertLevel, Error, Result};
use crate::transport::{FrameKind, RESERVED_TAG_BASE};

const TAG_BARRIER: i32 = RESERVED_TAG_BASE;
const TAG_BCAST: i32 = RESERVED_TAG_BASE + 64;
const TAG_REDUCE: i32 = RESERVED_TAG_BASE + 65;
const TAG_ALLTOALLV: i32 = RESERVED_TAG_BASE + 66;
const TAG_CHECK_VALUES: i32 = RESERVED_TAG_BASE + 67;
const TAG_CHECK_REDUCE: i32 = RESERVED_TAG_BASE + 68;
const TAG_CHECK_RESULT: i32 = RESERVED_TAG_BASE + 69;
const TAG_CHECK_COUNTS: i32 = RESERVED_TAG_BASE + 70;

fn encode_u64s(values: &[u64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

impl Communicator<'_> {
    fn coll_send(&self, dest: u32, tag: i32, signature: Option<u64>, payload: &[u8]) -> Result<()> {
        self.send_raw(FrameKind::Collective, dest, tag, signature, payload)
    }

    fn coll_recv(&self, source: u32, tag: i32, expected: Option<u64>) -> Result<Vec<u8>> {
        let msg = self.recv_raw(FrameKind::Collective, source, tag)?;
        if let (Some(expected), Some(got)) = (expected, msg.envelope.signature()) {
            if self.signature_enabled() && got != expected {
                return Err(Error::TypeMismatch { expected, got });
            }
        }
        Ok(msg.payload)
    }

    fn level3(&self) -> bool {
        self.rt().level.enables(AssertLevel::Communication)
    }

    /// Binomial-tree broadcast of raw bytes from `root`.
    fn bcast_bytes(&self, data: &mut Vec<u8>, root: u32, tag: i32, signature: Option<u64>) -> Result<()> {
        let n = self.size();
        let vr = (self.rank() + n - root) % n;
        let mut mask = 1u32;
        while mask < n {
            if vr & mask != 0 {
                let parent = (vr - mask + root) % n;
                *data = self.coll_recv(parent, tag, signature)?;
                break;
            }
            mask <<= 1;
        }
        mask >>= 1;
        while mask > 0 {
            if vr + mask < n {
                self.coll_send((vr + mask + root) % n, tag, signature, data)?;
            }
            mask >>= 1;
        }
        Ok(())
    }

    /// Linear reduction of packed elements to `root`, folding contributions
    /// in ascending rank order. Returns the result at the root only.
    fn reduce_bytes(
        &self,
        own: Vec<u8>,
        kind: FundamentalKind,
        op: ReduceOp,
        root: u32,
        tag: i32,
    ) -> Result<Option<Vec<u8>>> {
        let signature = Some(crate::buffer::TypeInfo::Fundamental(kind).signature());
        if self.rank() != root {
            self.coll_send(root, tag, signature, &own)?;
            return Ok(None);
        }
        let mut acc: Option<Vec<u8>> = None;
        let mut failure = None;
        for r in 0..self.size() {
            let part = if r == root {
                own.clone()
            } else {
                match self.coll_recv(r, tag, signature) {
                    Ok(p) => p,
                    Err(e @ Error::Disconnected { .. }) => return Err(e),
                    Err(e) => {
                        failure.get_or_insert(e);
                        continue;
                    }
                }
            };
            match acc.as_mut() {
                None => acc = Some(part),
                Some(a) => {
                    if let Err(e) = op.combine(kind, a, &part) {
                        failure.get_or_insert(Error::invalid(format!(
                            "rank {r} contributed {} bytes to a reduction of {} bytes: {e}",
                            part.len(),
                            a.len()
                        )));
                    }
                }
            }
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(acc),
        }
    }

    /// Level-3 agreement: every rank learns whether all ranks passed `ok`.
    /// If any did not, every rank aborts with the configured code.
    fn all_ok(&self, ok: bool, diag: impl FnOnce() -> String) -> Result<()> {
        let reduced = self.reduce_bytes(vec![ok as u8], FundamentalKind::Bool, ReduceOp::LogicalAnd, 0, TAG_CHECK_REDUCE)?;
        let mut flag = reduced.unwrap_or_default();
        self.bcast_bytes(&mut flag, 0, TAG_CHECK_RESULT, None)?;
        if flag.first() != Some(&1) {
            let msg = if ok {
                "collective arguments disagree on another rank".to_string()
            } else {
                diag()
            };
            self.rt().check(AssertLevel::Communication, || false, || msg);
        }
        Ok(())
    }

    /// Level-3 all-equal check of `values` against the root's.
    pub(crate) fn agree(&self, root: u32, values: &[u64], what: &str) -> Result<()> {
        let mine = encode_u64s(values);
        let mut theirs = if self.rank() == root { mine.clone() } else { Vec::new() };
        self.bcast_bytes(&mut theirs, root, TAG_CHECK_VALUES, None)?;
        let ok = theirs == mine;
        self.all_ok(ok, || {
            let root_vals: Vec<u64> = theirs
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            format!(
                "{what} disagrees: rank {} has {values:?}, root {root} has {root_vals:?}",
                self.rank()
            )
        })
    }

    /// Blocks until every rank has entered.
    pub fn barrier(&mut self) -> Result<()> {
        let n = self.size();
        let mut dist = 1u32;
        let mut round = 0;
        while dist < n {
            let to = (self.rank() + dist) % n;
            let from = (self.rank() + n - dist) % n;
            self.coll_send(to, TAG_BARRIER + round, None, &[])?;
            self.coll_recv(from, TAG_BARRIER + round, None)?;
            dist <<= 1;
            round += 1;
        }
        Ok(())
    }

    fn bcast_into<B: SendBuffer + RecvBuffer>(&self, buf: &mut B, root: u32) -> Result<()> {
        let signature = Some(buf.type_info().signature());
        let mut data = Vec::new();
        if self.rank() == root {
            buf.pack_all(&mut data)?;
        }
        self.bcast_bytes(&mut data, root, TAG_BCAST, signature)?;
        if self.rank() != root {
            if data.len() > buf.packed_len() {
                return Err(Error::Truncation {
                    actual_bytes: data.len() as u64,
                });
            }
            buf.unpack_elements(0, &data)?;
        }
        Ok(())
    }

    /// Copies the root's elements to every rank. All ranks must pass the same
    /// element count and type; at assert level 3 this is verified and a
    /// mismatch aborts every rank.
    pub fn broadcast<B: SendBuffer + RecvBuffer>(&mut self, mut buf: B, root: u32) -> Result<B::Output> {
        self.require_rank(root, "root")?;
        if self.level3() {
            let info = buf.type_info();
            self.agree(root, &[buf.packed_len() as u64, info.signature()], "broadcast byte count and type")?;
        }
        self.bcast_into(&mut buf, root)?;
        Ok(buf.into_output())
    }

    fn reduce_into<B: SendBuffer + RecvBuffer>(
        &self,
        buf: &mut B,
        kind: FundamentalKind,
        op: ReduceOp,
        root: u32,
    ) -> Result<()> {
        if self.level3() {
            self.agree(
                root,
                &[buf.packed_len() as u64, kind.code() as u64, op.code()],
                "reduction count, type and operator",
            )?;
        }
        let mut own = Vec::with_capacity(buf.packed_len());
        buf.pack_all(&mut own)?;
        if let Some(result) = self.reduce_bytes(own, kind, op, root, TAG_REDUCE)? {
            buf.unpack_elements(0, &result)?;
        }
        Ok(())
    }

    fn dynamic_kind<B: SendBuffer>(buf: &B, op: ReduceOp) -> Result<FundamentalKind> {
        let kind = buf
            .type_info()
            .fundamental_kind()
            .ok_or_else(|| Error::invalid("reductions need a fundamental element type"))?;
        if !op.supports(kind) {
            return Err(Error::invalid(format!("{op:?} is not defined for {kind}")));
        }
        Ok(kind)
    }

    /// Elementwise reduction to `root`. The root's buffer receives
    /// `x0 op x1 op ... op x(n-1)` folded left to right in rank order, so
    /// floating-point results are reproducible. Other ranks get their buffer
    /// back unchanged.
    pub fn reduce<B, O>(&mut self, mut buf: B, _op: O, root: u32) -> Result<B::Output>
    where
        B: Elements + SendBuffer + RecvBuffer,
        O: ReductionOp<B::Elem>,
    {
        self.require_rank(root, "root")?;
        self.reduce_into(&mut buf, <B::Elem as Fundamental>::KIND, O::OP, root)?;
        Ok(buf.into_output())
    }

    /// [`reduce`](Self::reduce) with an operator chosen at run time. An
    /// operator that is undefined for the element type is an
    /// `InvalidArgument` error.
    pub fn reduce_with<B: SendBuffer + RecvBuffer>(&mut self, mut buf: B, op: ReduceOp, root: u32) -> Result<B::Output> {
        self.require_rank(root, "root")?;
        let kind = Self::dynamic_kind(&buf, op)?;
        self.reduce_into(&mut buf, kind, op, root)?;
        Ok(buf.into_output())
    }

    /// Reduction whose result lands on every rank: a reduce to rank 0
    /// followed by a broadcast, so every rank holds identical bytes.
    pub fn allreduce<B, O>(&mut self, mut buf: B, _op: O) -> Result<B::Output>
    where
        B: Elements + SendBuffer + RecvBuffer,
        O: ReductionOp<B::Elem>,
    {
        self.reduce_into(&mut buf, <B::Elem as Fundamental>::KIND, O::OP, 0)?;
        self.bcast_into(&mut buf, 0)?;
        Ok(buf.into_output())
    }

    /// [`allreduce`](Self::allreduce) with an operator chosen at run time.
    pub fn allreduce_with<B: SendBuffer + RecvBuffer>(&mut self, mut buf: B, op: ReduceOp) -> Result<B::Output> {
        let kind = Self::dynamic_kind(&buf, op)?;
        self.reduce_into(&mut buf, kind, op, 0)?;
        self.bcast_into(&mut buf, 0)?;
        Ok(buf.into_output())
    }

    /// Personalized exchange with varying counts: window `i` of `send` on
    /// rank `r` lands in window `r` of `recv` on rank `i`. Counts and
    /// displacements are in elements. Receive windows must not overlap.
    pub fn alltoallv<S: SendBuffer, R: RecvBuffer>(
        &mut self,
        send: Irregular<S>,
        mut recv: Irregular<R>,
    ) -> Result<(S::Output, R::Output)> {
        let n = self.size() as usize;
        let me = self.rank() as usize;
        self.require(send.counts().len() == n && recv.counts().len() == n, || {
            format!(
                "alltoallv needs {n} counts per buffer, got {} and {}",
                send.counts().len(),
                recv.counts().len()
            )
        })?;
        recv.check_disjoint()?;
        let size = send.type_info().size();
        if size != recv.type_info().size() {
            return Err(Error::invalid(format!(
                "send elements of {size} bytes cannot fill receive elements of {} bytes",
                recv.type_info().size()
            )));
        }
        let signature = Some(send.type_info().signature());

        if self.level3() {
            for k in 1..n {
                let dest = (me + k) % n;
                let count = send.counts()[dest] as u64;
                self.coll_send(dest as u32, TAG_CHECK_COUNTS, None, &count.to_le_bytes())?;
            }
            let mut bad = Vec::new();
            for j in 0..n {
                let announced = if j == me {
                    send.counts()[me] as u64
                } else {
                    let bytes = self.coll_recv(j as u32, TAG_CHECK_COUNTS, None)?;
                    bytes
                        .get(..8)
                        .map_or(u64::MAX, |b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
                };
                if announced != recv.counts()[j] as u64 {
                    bad.push((j, announced, recv.counts()[j]));
                }
            }
            self.all_ok(bad.is_empty(), || {
                format!("alltoallv counts disagree on rank {me}: (source, sent, expected) {bad:?}")
            })?;
        }

        let base = send.base();
        let pack = |rank: usize| -> Result<Vec<u8>> {
            let mut out = Vec::with_capacity(send.counts()[rank] * size);
            base.pack_elements(send.displacements()[rank], send.counts()[rank], &mut out)?;
            Ok(out)
        };
        for k in 1..n {
            let dest = (me + k) % n;
            let payload = pack(dest)?;
            self.coll_send(dest as u32, TAG_ALLTOALLV, signature, &payload)?;
        }
        let local = pack(me)?;
        let mut failure = None;
        for j in 0..n {
            let data = if j == me {
                local.clone()
            } else {
                match self.coll_recv(j as u32, TAG_ALLTOALLV, signature) {
                    Ok(d) => d,
                    Err(e @ Error::Disconnected { .. }) => return Err(e),
                    Err(e) => {
                        failure.get_or_insert(e);
                        continue;
                    }
                }
            };
            if data.len() > recv.counts()[j] * size {
                failure.get_or_insert(Error::Truncation {
                    actual_bytes: data.len() as u64,
                });
                continue;
            }
            let first = recv.displacements()[j];
            if let Err(e) = recv.base_mut().unpack_elements(first, &data) {
                failure.get_or_insert(e);
            }
        }
        match failure {
            Some(e) => Err(e),
            None => Ok((send.into_output(), recv.into_output())),
        }
    }
}
