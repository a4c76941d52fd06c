use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Duration;

use super::{Envelope, Event, MatchKey, Message};

/// Handle of a posted receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PostId(u64);

#[derive(Debug, Default)]
struct State {
    queue: VecDeque<Message>,
    posted: Vec<(PostId, MatchKey)>,
    completed: HashMap<PostId, Message>,
    next_post: u64,
    abort: Option<i32>,
}

/// Per-rank message store. Internally synchronized; any number of producers
/// may deliver into it.
#[derive(Debug, Default)]
pub struct Mailbox {
    state: Mutex<State>,
    changed: Condvar,
    generation: AtomicU64,
}

impl Mailbox {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn bump(&self) {
        self.generation.fetch_add(1, Ordering::AcqRel);
        self.changed.notify_all();
    }

    /// Delivers a message: completes the oldest matching posted receive, or
    /// queues it.
    pub fn arrive(&self, msg: Message) -> Event {
        let mut st = self.lock();
        let event = {
            if let Some(code) = msg.abort_code() {
                st.abort.get_or_insert(code);
                Event::Abort { code }
            } else if let Some(i) = st.posted.iter().position(|(_, key)| key.matches(&msg.envelope)) {
                let (post, _) = st.posted.remove(i);
                st.completed.insert(post, msg);
                Event::Completed { post }
            } else {
                let env = msg.envelope;
                st.queue.push_back(msg);
                Event::Queued {
                    context_id: env.context_id,
                    source: env.source,
                    tag: env.tag,
                }
            }
        };
        // Bumped under the lock so wait_changed cannot miss the wakeup.
        self.bump();
        drop(st);
        event
    }

    /// Posts a receive. If a queued message already matches, the post
    /// completes immediately.
    pub fn post(&self, key: MatchKey) -> PostId {
        let mut st = self.lock();
        let post = PostId(st.next_post);
        st.next_post += 1;
        match take_first(&mut st.queue, &key) {
            Some(msg) => {
                st.completed.insert(post, msg);
            }
            None => st.posted.push((post, key)),
        }
        post
    }

    pub fn is_completed(&self, post: PostId) -> bool {
        self.lock().completed.contains_key(&post)
    }

    pub fn take_completed(&self, post: PostId) -> Option<Message> {
        self.lock().completed.remove(&post)
    }

    /// Withdraws a post. A message that already completed it is returned.
    pub fn cancel(&self, post: PostId) -> Option<Message> {
        let mut st = self.lock();
        st.posted.retain(|(p, _)| *p != post);
        st.completed.remove(&post)
    }

    /// Removes and returns the earliest queued message matching `key`.
    pub fn take_match(&self, key: &MatchKey) -> Option<Message> {
        take_first(&mut self.lock().queue, key)
    }

    /// Envelope of the earliest queued match, without consuming it.
    pub fn peek_match(&self, key: &MatchKey) -> Option<Envelope> {
        self.lock()
            .queue
            .iter()
            .find(|m| key.matches(&m.envelope))
            .map(|m| m.envelope)
    }

    pub fn queued(&self) -> usize {
        self.lock().queue.len()
    }

    /// Queued messages plus completed posts nobody has collected.
    pub fn pending(&self) -> usize {
        let st = self.lock();
        st.queue.len() + st.completed.len()
    }

    pub fn posted(&self) -> usize {
        self.lock().posted.len()
    }

    /// Wakes waiters without delivering anything.
    pub fn notify(&self) {
        let _st = self.lock();
        self.bump();
    }

    pub fn abort_code(&self) -> Option<i32> {
        self.lock().abort
    }

    pub fn generation(&self) -> u64 {
        self.generation.load(Ordering::Acquire)
    }

    /// Blocks until the generation moves past `since` or the timeout passes.
    pub fn wait_changed(&self, since: u64, timeout: Duration) {
        let st = self.lock();
        if self.generation() != since {
            return;
        }
        let _unused = self
            .changed
            .wait_timeout_while(st, timeout, |_| self.generation() == since)
            .unwrap_or_else(|e| e.into_inner());
    }
}

fn take_first(queue: &mut VecDeque<Message>, key: &MatchKey) -> Option<Message> {
    let i = queue.iter().position(|m| key.matches(&m.envelope))?;
    queue.remove(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{FrameKind, ANY_SOURCE, ANY_TAG};

    fn msg(source: u32, tag: i32, byte: u8) -> Message {
        Message::new(Envelope::new(FrameKind::Data, 1, source, 0, tag), vec![byte])
    }

    #[test]
    fn wildcard_source_picks_matching_tag() {
        let mb = Mailbox::new();
        mb.arrive(msg(0, 2, 1));
        mb.arrive(msg(1, 3, 2));
        let m = mb.take_match(&MatchKey::new(1, ANY_SOURCE, 3)).unwrap();
        assert_eq!(m.payload, [2]);
        assert_eq!(mb.queued(), 1);
    }

    #[test]
    fn same_key_delivered_in_order() {
        let mb = Mailbox::new();
        mb.arrive(msg(0, 5, 1));
        mb.arrive(msg(0, 5, 2));
        let key = MatchKey::new(1, 0, 5);
        assert_eq!(mb.take_match(&key).unwrap().payload, [1]);
        assert_eq!(mb.take_match(&key).unwrap().payload, [2]);
        assert!(mb.take_match(&key).is_none());
    }

    #[test]
    fn unmatched_post_is_parked_then_completed() {
        let mb = Mailbox::new();
        let post = mb.post(MatchKey::new(1, ANY_SOURCE, ANY_TAG));
        assert!(!mb.is_completed(post));
        assert_eq!(mb.posted(), 1);
        let ev = mb.arrive(msg(3, 9, 7));
        assert_eq!(ev, Event::Completed { post });
        assert_eq!(mb.take_completed(post).unwrap().payload, [7]);
        assert_eq!(mb.pending(), 0);
    }

    #[test]
    fn earliest_post_wins() {
        let mb = Mailbox::new();
        let a = mb.post(MatchKey::new(1, 0, ANY_TAG));
        let b = mb.post(MatchKey::new(1, 0, ANY_TAG));
        mb.arrive(msg(0, 1, 1));
        mb.arrive(msg(0, 1, 2));
        assert_eq!(mb.take_completed(a).unwrap().payload, [1]);
        assert_eq!(mb.take_completed(b).unwrap().payload, [2]);
    }

    #[test]
    fn peek_does_not_consume() {
        let mb = Mailbox::new();
        mb.arrive(msg(0, 1, 1));
        let key = MatchKey::new(1, ANY_SOURCE, 1);
        let a = mb.peek_match(&key).unwrap();
        let b = mb.peek_match(&key).unwrap();
        assert_eq!(a, b);
        assert_eq!(mb.queued(), 1);
    }

    #[test]
    fn context_isolation() {
        let mb = Mailbox::new();
        mb.arrive(msg(0, 1, 1));
        assert!(mb.take_match(&MatchKey::new(2, ANY_SOURCE, ANY_TAG)).is_none());
    }

    #[test]
    fn abort_first_code_wins() {
        let mb = Mailbox::new();
        let g = mb.generation();
        mb.arrive(Message::abort(1, 0, 3));
        mb.arrive(Message::abort(2, 0, 4));
        assert_eq!(mb.abort_code(), Some(3));
        assert_eq!(mb.queued(), 0);
        assert!(mb.generation() > g);
    }
}
