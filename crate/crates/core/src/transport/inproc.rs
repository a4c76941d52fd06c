use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::{backoff, Endpoint, Envelope, Event, Mailbox, Message, TransportStats};
use crate::error::{Error, Result};

/// Shared state of a job whose ranks are threads of one process.
#[derive(Debug)]
pub struct InProcWorld {
    mailboxes: Vec<Mailbox>,
    stats: Vec<TransportStats>,
    attached: Vec<AtomicBool>,
    closed: Vec<AtomicBool>,
}

impl InProcWorld {
    pub fn new(size: u32) -> Arc<Self> {
        let n = size as usize;
        Arc::new(InProcWorld {
            mailboxes: (0..n).map(|_| Mailbox::new()).collect(),
            stats: (0..n).map(|_| TransportStats::default()).collect(),
            attached: (0..n).map(|_| AtomicBool::new(false)).collect(),
            closed: (0..n).map(|_| AtomicBool::new(false)).collect(),
        })
    }

    pub fn size(&self) -> u32 {
        self.mailboxes.len() as u32
    }

    /// Attaches rank `rank`. Each rank may be attached once at a time.
    pub fn endpoint(self: &Arc<Self>, rank: u32) -> Result<InProcEndpoint> {
        let r = rank as usize;
        if r >= self.mailboxes.len() {
            return Err(Error::Bootstrap(format!(
                "rank {rank} outside in-process world of {}",
                self.size()
            )));
        }
        if self.attached[r].swap(true, Ordering::AcqRel) {
            return Err(Error::Bootstrap(format!("rank {rank} is already attached")));
        }
        self.closed[r].store(false, Ordering::Release);
        Ok(InProcEndpoint {
            world: Arc::clone(self),
            rank,
        })
    }

    /// Communicators alive across all ranks.
    pub fn live_contexts(&self) -> i64 {
        self.stats.iter().map(TransportStats::live_contexts).sum()
    }

    /// Messages delivered but never received, across all ranks.
    pub fn queued_messages(&self) -> usize {
        self.mailboxes.iter().map(Mailbox::pending).sum()
    }

    pub fn frames_sent(&self, rank: u32) -> u64 {
        self.stats[rank as usize].frames_sent()
    }

    pub fn total_frames_sent(&self) -> u64 {
        self.stats.iter().map(TransportStats::frames_sent).sum()
    }
}

/// One thread-rank's endpoint. Sends deliver straight into the target mailbox,
/// so there is never socket I/O to progress.
#[derive(Debug)]
pub struct InProcEndpoint {
    world: Arc<InProcWorld>,
    rank: u32,
}

impl InProcEndpoint {
    pub fn world(&self) -> &Arc<InProcWorld> {
        &self.world
    }
}

impl Endpoint for InProcEndpoint {
    fn rank(&self) -> u32 {
        self.rank
    }

    fn world_size(&self) -> u32 {
        self.world.size()
    }

    fn mailbox(&self) -> &Mailbox {
        &self.world.mailboxes[self.rank as usize]
    }

    fn stats(&self) -> &TransportStats {
        &self.world.stats[self.rank as usize]
    }

    fn send_frame(&self, dest: u32, envelope: &Envelope, payload: &[u8]) -> Result<()> {
        let mailbox = self
            .world
            .mailboxes
            .get(dest as usize)
            .ok_or_else(|| Error::invalid(format!("no rank {dest} in world of {}", self.world.size())))?;
        self.stats().count_frame();
        mailbox.arrive(Message::new(*envelope, payload.to_vec()));
        Ok(())
    }

    fn progress(&self, _budget: usize) -> Vec<Event> {
        Vec::new()
    }

    fn peer_closed(&self, rank: u32) -> bool {
        self.world
            .closed
            .get(rank as usize)
            .is_some_and(|c| c.load(Ordering::Acquire))
    }

    fn broadcast_abort(&self, code: i32) {
        for (r, mailbox) in self.world.mailboxes.iter().enumerate() {
            if r as u32 != self.rank {
                mailbox.arrive(Message::abort(self.rank, r as u32, code));
            }
        }
    }

    fn idle(&self, generation: u64, spins: u32) {
        if spins < 8 {
            std::thread::yield_now();
        } else {
            let wait = backoff(spins).max(Duration::from_millis(2));
            self.mailbox().wait_changed(generation, wait);
        }
    }
}

impl Drop for InProcEndpoint {
    fn drop(&mut self) {
        let r = self.rank as usize;
        self.world.closed[r].store(true, Ordering::Release);
        self.world.attached[r].store(false, Ordering::Release);
        for mailbox in &self.world.mailboxes {
            mailbox.notify();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{FrameKind, MatchKey};

    #[test]
    fn four_endpoints_no_sockets() {
        let world = InProcWorld::new(4);
        let eps: Vec<_> = (0..4).map(|r| world.endpoint(r).unwrap()).collect();
        assert_eq!(eps.len(), 4);
        assert!(world.endpoint(1).is_err());
        assert!(world.endpoint(4).is_err());
        let env = Envelope::new(FrameKind::Data, 1, 0, 2, 0);
        eps[0].send_frame(2, &env, &[1, 2]).unwrap();
        assert!(eps[0].progress(16).is_empty());
        let m = eps[2].mailbox().take_match(&MatchKey::new(1, 0, 0)).unwrap();
        assert_eq!(m.payload, [1, 2]);
        assert_eq!(m.envelope.payload_len, 2);
        assert_eq!(world.frames_sent(0), 1);
    }

    #[test]
    fn drop_marks_closed() {
        let world = InProcWorld::new(2);
        let a = world.endpoint(0).unwrap();
        let b = world.endpoint(1).unwrap();
        assert!(!a.peer_closed(1));
        drop(b);
        assert!(a.peer_closed(1));
    }

    #[test]
    fn abort_reaches_peers() {
        let world = InProcWorld::new(3);
        let eps: Vec<_> = (0..3).map(|r| world.endpoint(r).unwrap()).collect();
        eps[1].broadcast_abort(3);
        assert_eq!(eps[0].mailbox().abort_code(), Some(3));
        assert_eq!(eps[2].mailbox().abort_code(), Some(3));
        assert_eq!(eps[1].mailbox().abort_code(), None);
    }
}
