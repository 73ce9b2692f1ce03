// SPDX-License-Identifier: Apache-2.0

//! The wall-side service.
//!
//! Roles:
//! - coordinator: answers `QueryInfo`, registers clients, collects
//!   `DisplayFrameComplete` and issues `NextFrameToken`s within the
//!   frames-in-flight window;
//! - display: one per monitor; accepts a socket group per session, runs a
//!   decompression pool into its framebuffer shard and hands completed
//!   frames to a sink;
//! - dispatcher (dispatcher mode): accepts client tiles and forwards each to
//!   the displays its header overlaps.
//!
//! Displays and the dispatcher keep a persistent control connection to the
//! coordinator, announced with `Join`. Every `InfoReply` the coordinator
//! sends on that link carries the token of the next session; a `Shutdown`
//! from a display on the same link marks the end of its session.

pub mod coordinator;
pub mod dispatcher;
pub mod display;
pub mod local;
pub mod sink;

use std::io;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use dw2_core::{Message, Role, WallConfig};
use log::debug;

use crate::mailbox::{PopError, TimestampedMailbox};
use crate::socket_group::{dial, Connection, ConnectionHooks, Delivery, Envelope, GroupError, Traffic};

pub use coordinator::{run_coordinator, CoordinatorStats, SessionRecord};
pub use dispatcher::{run_dispatcher, DispatcherStats};
pub use display::{run_display, DisplayOptions, DisplayStats};
pub use local::{LocalWall, LocalWallOptions, WallStats};
pub use sink::{FrameSink, MemorySink, NullSink, PngSink, SinkSpec};

/// Polling period for loops that also watch the stop flag.
pub(crate) const POLL: Duration = Duration::from_millis(20);
pub(crate) const JOIN_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Sink(#[from] sink::SinkError),
    #[error("lost the coordinator: {0}")]
    CoordinatorLost(String),
    #[error("display {0} disconnected")]
    DisplayLost(usize),
    #[error("dispatcher disconnected")]
    DispatcherLost,
    #[error("{0}")]
    Invalid(String),
}

/// Cooperative stop flag shared by every thread of a role.
#[derive(Clone, Debug, Default)]
pub struct StopSignal(Arc<AtomicBool>);

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stop(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

pub(crate) enum ControlEvent {
    Token(u64),
    Shutdown,
    Lost(String),
}

/// A display's or dispatcher's connection to the coordinator.
pub(crate) struct ControlLink {
    conn: Connection,
    inbox: Arc<TimestampedMailbox<Envelope>>,
}

impl ControlLink {
    pub fn join(config: &WallConfig, role: Role, index: u32, traffic: Arc<Traffic>) -> Result<ControlLink, ServiceError> {
        let stream = dial(&config.coordinator, Instant::now() + JOIN_TIMEOUT, true)?;
        let inbox = Arc::new(TimestampedMailbox::new());
        let conn = Connection::spawn(
            stream,
            0,
            inbox.clone(),
            traffic,
            ConnectionHooks {
                report_disconnect: true,
                on_exit: None,
            },
        )?;
        conn.send(&Message::Join { role, index })?;
        Ok(ControlLink { conn, inbox })
    }

    pub fn send(&self, message: &Message) -> Result<(), ServiceError> {
        self.conn
            .send(message)
            .map_err(|e| ServiceError::CoordinatorLost(e.to_string()))
    }

    pub fn has_pending(&self) -> bool {
        !self.inbox.is_empty()
    }

    /// Next meaningful control event, or `None` after `timeout`.
    pub fn next(&self, timeout: Duration) -> Option<ControlEvent> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let env = match self.inbox.pop_any_timeout(left) {
                Ok((_, env)) => env,
                Err(PopError::Timeout) | Err(PopError::Interrupted) => return None,
                Err(PopError::Closed) => return Some(ControlEvent::Lost("control link closed".into())),
            };
            match env.delivery {
                Delivery::Message(Message::InfoReply { session_token, .. }) => {
                    return Some(ControlEvent::Token(session_token))
                }
                Delivery::Message(Message::Shutdown) => return Some(ControlEvent::Shutdown),
                Delivery::Message(other) => debug!("ignoring control message tag {}", other.tag()),
                Delivery::Disconnected { error } => {
                    return Some(ControlEvent::Lost(error.unwrap_or_else(|| "connection closed".into())))
                }
            }
        }
    }

    /// Waits for the next session token; `Ok(None)` on shutdown.
    pub fn wait_token(&self, stop: &StopSignal) -> Result<Option<u64>, ServiceError> {
        loop {
            if stop.is_stopped() {
                return Ok(None);
            }
            match self.next(POLL * 5) {
                Some(ControlEvent::Token(t)) => return Ok(Some(t)),
                Some(ControlEvent::Shutdown) => return Ok(None),
                // the coordinator may exit first on a local stop
                Some(ControlEvent::Lost(_)) if stop.is_stopped() => return Ok(None),
                Some(ControlEvent::Lost(e)) => return Err(ServiceError::CoordinatorLost(e)),
                None => {}
            }
        }
    }

    pub fn close(mut self) {
        self.conn.finish_and_wait(Duration::from_secs(1));
    }
}
