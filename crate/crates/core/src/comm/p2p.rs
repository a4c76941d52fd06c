use crate::buffer::{OwnedBuffer, RecvBuffer, SendBuffer};
use crate::communicator::{deliver, local_rank, Communicator, ProbeStatus, Status};
use crate::datatype::{CommittedDatatype, DatatypeTree, Fundamental, FundamentalKind};
use crate::error::{AssertLevel, Error, Result};
use crate::request::{RecvRequest, SendRequest};
use crate::transport::{FrameKind, ANY_TAG, RESERVED_TAG_BASE};

impl<'s> Communicator<'s> {
    fn require_send_tag(&self, tag: i32) -> Result<()> {
        self.require((0..RESERVED_TAG_BASE).contains(&tag), || {
            format!("tag {tag} outside 0..{RESERVED_TAG_BASE}")
        })
    }

    fn require_recv_tag(&self, tag: i32) -> Result<()> {
        self.require(tag == ANY_TAG || (0..RESERVED_TAG_BASE).contains(&tag), || {
            format!("receive tag {tag} is neither ANY_TAG nor in 0..{RESERVED_TAG_BASE}")
        })
    }

    fn post_send<B: SendBuffer>(&self, buf: &B, dest: u32, tag: i32) -> Result<()> {
        self.require_rank(dest, "destination")?;
        self.require_send_tag(tag)?;
        let mut payload = Vec::with_capacity(buf.packed_len());
        buf.pack_all(&mut payload)?;
        self.send_raw(FrameKind::Data, dest, tag, Some(buf.type_info().signature()), &payload)
    }

    /// Sends every element of `buf` to `dest`. Owned buffers come back in
    /// the result.
    pub fn send<B: SendBuffer>(&mut self, buf: B, dest: u32, tag: i32) -> Result<B::Output> {
        self.post_send(&buf, dest, tag)?;
        Ok(buf.into_output())
    }

    /// Receives one message into `buf`. The buffer is never resized; a
    /// message larger than it is consumed and reported as
    /// [`Error::Truncation`].
    pub fn recv<B: RecvBuffer>(&mut self, mut buf: B, source: u32, tag: i32) -> Result<(B::Output, Status)> {
        self.require_source(source)?;
        self.require_recv_tag(tag)?;
        let msg = self.recv_raw(FrameKind::Data, source, tag)?;
        let status = deliver(self.rt().level, self.members(), &mut buf, &msg)?;
        Ok((buf.into_output(), status))
    }

    /// Sends `send` to `dest` and receives into `recv` from `source`. Sends
    /// are buffered, so exchanges in a ring cannot deadlock.
    pub fn send_recv<S: SendBuffer, R: RecvBuffer>(
        &mut self,
        send: S,
        dest: u32,
        send_tag: i32,
        recv: R,
        source: u32,
        recv_tag: i32,
    ) -> Result<(S::Output, R::Output, Status)> {
        self.require_source(source)?;
        self.require_recv_tag(recv_tag)?;
        let sent = self.send(send, dest, send_tag)?;
        let (received, status) = self.recv(recv, source, recv_tag)?;
        Ok((sent, received, status))
    }

    /// Starts a send. The buffer is moved into the request and returned by
    /// `wait`.
    pub fn isend<B: SendBuffer + OwnedBuffer>(&mut self, buf: B, dest: u32, tag: i32) -> Result<SendRequest<B>> {
        self.post_send(&buf, dest, tag)?;
        Ok(SendRequest::completed(buf))
    }

    /// Starts a receive into an owned buffer.
    pub fn irecv<B: RecvBuffer + OwnedBuffer>(&mut self, buf: B, source: u32, tag: i32) -> Result<RecvRequest<'s, B>> {
        self.require_source(source)?;
        self.require_recv_tag(tag)?;
        let key = self.key(FrameKind::Data, source, tag);
        let post = self.rt().endpoint.mailbox().post(key);
        Ok(RecvRequest::new(
            self.rt(),
            self.members().clone(),
            post,
            key.source,
            buf,
        ))
    }

    /// Blocks until a matching message is queued and describes it without
    /// consuming it.
    pub fn probe(&mut self, source: u32, tag: i32) -> Result<ProbeStatus> {
        self.require_source(source)?;
        self.require_recv_tag(tag)?;
        let env = self.probe_raw(source, tag)?;
        Ok(ProbeStatus {
            source: local_rank(self.members(), env.source),
            tag: env.tag,
            bytes: env.payload_len,
        })
    }

    fn check_signature(&self, got: Option<u64>, expected: u64) -> Result<()> {
        match got {
            Some(got) if self.rt().level.enables(AssertLevel::Metadata) && got != expected => {
                Err(Error::TypeMismatch { expected, got })
            }
            _ => Ok(()),
        }
    }

    /// Receives a message of unknown length into a newly allocated vector
    /// sized to fit it exactly.
    pub fn recv_probe<T: Fundamental>(&mut self, source: u32, tag: i32) -> Result<(Vec<T>, Status)> {
        self.require_source(source)?;
        self.require_recv_tag(tag)?;
        let msg = self.recv_raw(FrameKind::Data, source, tag)?;
        let mut out = vec![T::default(); msg.payload.len() / T::KIND.size()];
        let status = deliver(self.rt().level, self.members(), &mut out, &msg)?;
        Ok((out, status))
    }

    /// [`recv_probe`](Self::recv_probe) for a committed datatype: allocates
    /// `count * extent` bytes. Gap bytes are zero.
    pub fn recv_probe_typed(
        &mut self,
        source: u32,
        tag: i32,
        datatype: &CommittedDatatype,
    ) -> Result<(Vec<u8>, Status)> {
        self.require_source(source)?;
        self.require_recv_tag(tag)?;
        let msg = self.recv_raw(FrameKind::Data, source, tag)?;
        self.check_signature(msg.envelope.signature(), datatype.signature())?;
        let size = datatype.size();
        if !msg.payload.len().is_multiple_of(size) {
            return Err(Error::invalid(format!(
                "{} bytes is not a whole number of elements of size {size}",
                msg.payload.len()
            )));
        }
        let count = msg.payload.len() / size;
        let mut out = vec![0u8; count * datatype.extent()];
        datatype.unpack(&msg.payload, count, &mut out)?;
        Ok((
            out,
            Status {
                source: local_rank(self.members(), msg.envelope.source),
                tag: msg.envelope.tag,
                count,
            },
        ))
    }

    /// Sends raw bytes typed as `BYTE`.
    pub(crate) fn send_bytes(&mut self, bytes: &[u8], dest: u32, tag: i32) -> Result<()> {
        self.require_rank(dest, "destination")?;
        self.require_send_tag(tag)?;
        self.send_raw(FrameKind::Data, dest, tag, Some(byte_signature()), bytes)
    }

    pub(crate) fn recv_bytes(&mut self, source: u32, tag: i32) -> Result<(Vec<u8>, Status)> {
        self.require_source(source)?;
        self.require_recv_tag(tag)?;
        let msg = self.recv_raw(FrameKind::Data, source, tag)?;
        self.check_signature(msg.envelope.signature(), byte_signature())?;
        let status = Status {
            source: local_rank(self.members(), msg.envelope.source),
            tag: msg.envelope.tag,
            count: msg.payload.len(),
        };
        Ok((msg.payload, status))
    }
}

fn byte_signature() -> u64 {
    DatatypeTree::Fundamental(FundamentalKind::Byte).signature()
}
