//! Handles for nonblocking operations.
//!
//! A request owns the buffer it was started with, so the buffer cannot be
//! touched until [`wait`](RecvRequest::wait) or a successful
//! [`test`](RecvRequest::test) hands it back. Dropping a request that is still
//! active blocks until the operation completes.

use std::fmt;
use std::sync::Arc;

use crate::buffer::{OwnedBuffer, RecvBuffer, SendBuffer};
use crate::communicator::{deliver, localize, Status};
use crate::error::Error;
use crate::runtime::Runtime;
use crate::transport::{Message, PostId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestState {
    Active,
    Completed,
    Consumed,
}

/// A failed completion. Carries the request's buffer back when there still
/// is one.
pub struct Failed<T> {
    pub error: Error,
    pub buffer: Option<T>,
}

impl<T> Failed<T> {
    fn consumed() -> Self {
        Failed {
            error: Error::invalid("request already consumed"),
            buffer: None,
        }
    }
}

impl<T> fmt::Debug for Failed<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Failed")
            .field("error", &self.error)
            .field("has_buffer", &self.buffer.is_some())
            .finish()
    }
}

impl<T> fmt::Display for Failed<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl<T> std::error::Error for Failed<T> {}

impl<T> From<Failed<T>> for Error {
    fn from(f: Failed<T>) -> Error {
        f.error
    }
}

/// A send started with [`isend`](crate::Communicator::isend). Sends are
/// buffered eagerly, so the request is complete as soon as it exists.
#[derive(Debug)]
pub struct SendRequest<B> {
    buf: Option<B>,
}

impl<B: SendBuffer + OwnedBuffer> SendRequest<B> {
    pub(crate) fn completed(buf: B) -> Self {
        SendRequest { buf: Some(buf) }
    }

    pub fn state(&self) -> RequestState {
        if self.buf.is_some() {
            RequestState::Completed
        } else {
            RequestState::Consumed
        }
    }

    /// Returns the send buffer for reuse.
    pub fn wait(mut self) -> Result<B::Output, Failed<B::Output>> {
        self.buf.take().map(|b| b.into_output()).ok_or_else(Failed::consumed)
    }

    /// `Some(buffer)` once complete. Calling again after that is an error.
    pub fn test(&mut self) -> Result<Option<B::Output>, Failed<B::Output>> {
        self.buf
            .take()
            .map(|b| Some(b.into_output()))
            .ok_or_else(Failed::consumed)
    }
}

/// A receive started with [`irecv`](crate::Communicator::irecv).
pub struct RecvRequest<'s, B: RecvBuffer + OwnedBuffer> {
    rt: &'s Runtime,
    members: Arc<[u32]>,
    post: PostId,
    source: u32,
    buf: Option<B>,
    arrived: Option<Message>,
    state: RequestState,
}

impl<B: RecvBuffer + OwnedBuffer> fmt::Debug for RecvRequest<'_, B> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RecvRequest")
            .field("post", &self.post)
            .field("source", &self.source)
            .field("state", &self.state)
            .finish()
    }
}

type Polled<B> = Result<Option<(<B as crate::buffer::DataBuffer>::Output, Status)>, Failed<<B as crate::buffer::DataBuffer>::Output>>;

type Completion<B> = Result<(<B as crate::buffer::DataBuffer>::Output, Status), Failed<<B as crate::buffer::DataBuffer>::Output>>;

impl<'s, B: RecvBuffer + OwnedBuffer> RecvRequest<'s, B> {
    pub(crate) fn new(rt: &'s Runtime, members: Arc<[u32]>, post: PostId, source: u32, buf: B) -> Self {
        RecvRequest {
            rt,
            members,
            post,
            source,
            buf: Some(buf),
            arrived: None,
            state: RequestState::Active,
        }
    }

    pub fn state(&self) -> RequestState {
        self.state
    }

    /// Makes bounded progress and moves an active request to completed if a
    /// message has matched. Does not hand anything back.
    pub fn poll(&mut self) -> RequestState {
        if self.state == RequestState::Active && self.rt.poll_post(self.post) {
            self.arrived = self.rt.endpoint.mailbox().take_completed(self.post);
            self.state = RequestState::Completed;
        }
        self.state
    }

    fn finish(&mut self) -> Completion<B> {
        let msg = self.arrived.take().expect("completed request holds its message");
        let mut buf = self.buf.take().expect("completed request holds its buffer");
        self.state = RequestState::Consumed;
        match deliver(self.rt.level, &self.members, &mut buf, &msg) {
            Ok(status) => Ok((buf.into_output(), status)),
            Err(error) => Err(Failed {
                error,
                buffer: Some(buf.into_output()),
            }),
        }
    }

    fn fail(&mut self, error: Error) -> Failed<B::Output> {
        self.state = RequestState::Consumed;
        self.rt.endpoint.mailbox().cancel(self.post);
        Failed {
            error: localize(&self.members, error),
            buffer: self.buf.take().map(|b| b.into_output()),
        }
    }

    /// Blocks until the message arrives and returns the filled buffer.
    pub fn wait(mut self) -> Completion<B> {
        match self.state {
            RequestState::Consumed => Err(Failed::consumed()),
            RequestState::Completed => self.finish(),
            RequestState::Active => match self.rt.wait_post(self.post, self.source, &self.members) {
                Ok(msg) => {
                    self.arrived = Some(msg);
                    self.finish()
                }
                Err(e) => Err(self.fail(e)),
            },
        }
    }

    /// Non-blocking: `None` while the message is outstanding, the filled
    /// buffer once it is there. Calling again after that is an error.
    pub fn test(&mut self) -> Polled<B> {
        match self.poll() {
            RequestState::Consumed => Err(Failed::consumed()),
            RequestState::Completed => self.finish().map(Some),
            RequestState::Active => match self.rt.unreachable(self.source, &self.members) {
                Some(rank) if !self.rt.poll_post(self.post) => Err(self.fail(Error::Disconnected { rank })),
                _ => Ok(None),
            },
        }
    }
}

impl<B: RecvBuffer + OwnedBuffer> Drop for RecvRequest<'_, B> {
    fn drop(&mut self) {
        if self.state != RequestState::Active {
            return;
        }
        if std::thread::panicking() {
            self.rt.endpoint.mailbox().cancel(self.post);
            return;
        }
        let _ = self.rt.wait_post(self.post, self.source, &self.members);
    }
}
