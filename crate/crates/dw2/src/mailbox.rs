// SPDX-License-Identifier: Apache-2.0

//! Timestamped mailbox: a locking, unbounded producer-consumer queue whose
//! items carry a frame id. Consumers either take the oldest item or only
//! items of one frame; items of other frames stay queued in order.
//!
//! Memory is bounded one level up, by the frames-in-flight token window, so
//! the queue itself never blocks producers.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

/// Frame id reserved for control traffic that is not tied to a frame.
pub const CONTROL_FRAME: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PopError {
    /// Closed and nothing matching remains: end of stream.
    #[error("mailbox closed")]
    Closed,
    #[error("timed out")]
    Timeout,
    /// The caller's stop condition became true while waiting.
    #[error("interrupted")]
    Interrupted,
}

/// Returned by [`TimestampedMailbox::post`] on a closed mailbox, carrying the
/// rejected item back.
#[derive(Debug, PartialEq, Eq, thiserror::Error)]
#[error("post to a closed mailbox")]
pub struct PostError<T>(pub T);

struct State<T> {
    queue: VecDeque<(u32, T)>,
    closed: bool,
}

pub struct TimestampedMailbox<T> {
    state: Mutex<State<T>>,
    changed: Condvar,
}

impl<T> Default for TimestampedMailbox<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> std::fmt::Debug for TimestampedMailbox<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = self.lock();
        f.debug_struct("TimestampedMailbox")
            .field("len", &s.queue.len())
            .field("closed", &s.closed)
            .finish()
    }
}

enum Filter {
    Any,
    Frame(u32),
}

impl Filter {
    fn find<T>(&self, queue: &VecDeque<(u32, T)>) -> Option<usize> {
        match self {
            Filter::Any => (!queue.is_empty()).then_some(0),
            Filter::Frame(f) => queue.iter().position(|(id, _)| id == f),
        }
    }
}

impl<T> TimestampedMailbox<T> {
    pub fn new() -> Self {
        TimestampedMailbox {
            state: Mutex::new(State {
                queue: VecDeque::new(),
                closed: false,
            }),
            changed: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, State<T>> {
        // a panicking consumer must not wedge every other thread
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn post(&self, frame_id: u32, item: T) -> Result<(), PostError<T>> {
        let mut s = self.lock();
        if s.closed {
            return Err(PostError(item));
        }
        s.queue.push_back((frame_id, item));
        drop(s);
        // consumers wait on different frames, so wake them all
        self.changed.notify_all();
        Ok(())
    }

    /// Blocks for the oldest item. `None` means closed and drained.
    pub fn pop_any(&self) -> Option<(u32, T)> {
        self.pop(Filter::Any, None, &mut || false).ok()
    }

    /// Blocks for the oldest item of `frame_id`. `None` means the mailbox is
    /// closed and holds nothing for that frame.
    pub fn pop_for_frame(&self, frame_id: u32) -> Option<T> {
        self.pop(Filter::Frame(frame_id), None, &mut || false)
            .ok()
            .map(|(_, t)| t)
    }

    pub fn pop_any_timeout(&self, timeout: Duration) -> Result<(u32, T), PopError> {
        self.pop(Filter::Any, Some(Instant::now() + timeout), &mut || false)
    }

    pub fn pop_for_frame_timeout(&self, frame_id: u32, timeout: Duration) -> Result<T, PopError> {
        self.pop(
            Filter::Frame(frame_id),
            Some(Instant::now() + timeout),
            &mut || false,
        )
        .map(|(_, t)| t)
    }

    /// Like [`pop_for_frame`](Self::pop_for_frame) but gives up with
    /// [`PopError::Interrupted`] once `stop` returns true. `stop` is evaluated
    /// under the mailbox lock on entry and after every wakeup; whoever flips
    /// the condition must call [`notify_all`](Self::notify_all) afterwards.
    pub fn pop_for_frame_unless(
        &self,
        frame_id: u32,
        mut stop: impl FnMut() -> bool,
    ) -> Result<T, PopError> {
        self.pop(Filter::Frame(frame_id), None, &mut stop)
            .map(|(_, t)| t)
    }

    pub fn try_pop_any(&self) -> Option<(u32, T)> {
        let mut s = self.lock();
        s.queue.pop_front()
    }

    pub fn try_pop_for_frame(&self, frame_id: u32) -> Option<T> {
        let mut s = self.lock();
        let i = Filter::Frame(frame_id).find(&s.queue)?;
        s.queue.remove(i).map(|(_, t)| t)
    }

    fn pop(
        &self,
        filter: Filter,
        deadline: Option<Instant>,
        stop: &mut dyn FnMut() -> bool,
    ) -> Result<(u32, T), PopError> {
        let mut s = self.lock();
        loop {
            if let Some(i) = filter.find(&s.queue) {
                return Ok(s.queue.remove(i).expect("index from find"));
            }
            if s.closed {
                return Err(PopError::Closed);
            }
            if stop() {
                return Err(PopError::Interrupted);
            }
            s = match deadline {
                None => self.changed.wait(s).unwrap_or_else(|p| p.into_inner()),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Err(PopError::Timeout);
                    }
                    self.changed
                        .wait_timeout(s, d - now)
                        .unwrap_or_else(|p| p.into_inner())
                        .0
                }
            };
        }
    }

    /// Removes every item whose frame id is below `frame_id` (control items
    /// under [`CONTROL_FRAME`] are kept) and returns them in queue order.
    pub fn drain_before(&self, frame_id: u32) -> Vec<(u32, T)> {
        let mut s = self.lock();
        let mut kept = VecDeque::with_capacity(s.queue.len());
        let mut removed = Vec::new();
        for (f, t) in s.queue.drain(..) {
            if f < frame_id {
                removed.push((f, t));
            } else {
                kept.push_back((f, t));
            }
        }
        s.queue = kept;
        removed
    }

    /// Wakes all blocked consumers so they re-check their stop conditions.
    pub fn notify_all(&self) {
        let _s = self.lock();
        self.changed.notify_all();
    }

    /// Rejects further posts and wakes every consumer. Queued items can still
    /// be popped.
    pub fn close(&self) {
        let mut s = self.lock();
        s.closed = true;
        drop(s);
        self.changed.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    pub fn len(&self) -> usize {
        self.lock().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().queue.is_empty()
    }
}
