// SPDX-License-Identifier: Apache-2.0

//! Display process: one per monitor.
//!
//! Per session, a pool of decompression workers takes tiles of the current
//! frame out of the group's incoming mailbox, decodes them without holding
//! any lock, then writes them into the framebuffer shard under a mutex. The
//! worker whose write completes the coverage reports the frame, passes a copy
//! to the sink thread, advances the frame and discards tiles of finished
//! frames.

use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::Duration;

use dw2_core::{DisplayFramebuffer, Message, Mode, PixelBuffer, Role, WallConfig, WriteError};
use log::{debug, info, warn};

use super::sink::FrameSink;
use super::{ControlEvent, ControlLink, ServiceError, StopSignal, POLL};
use crate::codec;
use crate::mailbox::{PopError, TimestampedMailbox};
use crate::socket_group::{
    accept_group, Delivery, Envelope, ExpectedPeers, GroupError, GroupOptions, SocketGroup, Traffic, TrafficSnapshot,
};

/// Decompression workers per display when not configured: hardware threads
/// minus two, at least one.
pub fn default_decomp_threads() -> usize {
    thread::available_parallelism()
        .map(|n| n.get().saturating_sub(2))
        .unwrap_or(1)
        .max(1)
}

#[derive(Clone, Debug)]
pub struct DisplayOptions {
    pub decomp_threads: usize,
    pub handshake_timeout: Duration,
}

impl Default for DisplayOptions {
    fn default() -> Self {
        DisplayOptions {
            decomp_threads: default_decomp_threads(),
            handshake_timeout: crate::socket_group::DEFAULT_HANDSHAKE_TIMEOUT,
        }
    }
}

/// Live counters of a display process, plus a pause switch used to stall it.
#[derive(Debug, Default)]
pub struct DisplayStats {
    pub tiles: AtomicU64,
    pub payload_bytes: AtomicU64,
    pub pixels_written: AtomicU64,
    /// Tiles that arrived after their frame had completed.
    pub late_tiles: AtomicU64,
    pub malformed_tiles: AtomicU64,
    pub frames_completed: AtomicU64,
    pub sessions: AtomicU64,
    pub traffic: Arc<Traffic>,
    paused: AtomicBool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DisplaySnapshot {
    pub tiles: u64,
    pub payload_bytes: u64,
    pub pixels_written: u64,
    pub late_tiles: u64,
    pub malformed_tiles: u64,
    pub frames_completed: u64,
    pub sessions: u64,
    pub traffic: TrafficSnapshot,
}

impl DisplayStats {
    pub fn snapshot(&self) -> DisplaySnapshot {
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        DisplaySnapshot {
            tiles: l(&self.tiles),
            payload_bytes: l(&self.payload_bytes),
            pixels_written: l(&self.pixels_written),
            late_tiles: l(&self.late_tiles),
            malformed_tiles: l(&self.malformed_tiles),
            frames_completed: l(&self.frames_completed),
            sessions: l(&self.sessions),
            traffic: self.traffic.snapshot(),
        }
    }

    /// While paused, workers hold on to the tiles they popped.
    pub fn set_paused(&self, paused: bool) {
        self.paused.store(paused, Ordering::SeqCst);
    }

    pub fn is_paused(&self) -> bool {
        self.paused.load(Ordering::SeqCst)
    }
}

fn bump(a: &AtomicU64, n: u64) {
    a.fetch_add(n, Ordering::Relaxed);
}

struct Shared<'a> {
    id: usize,
    fb: Mutex<DisplayFramebuffer>,
    current: AtomicU32,
    stats: &'a DisplayStats,
    control: &'a ControlLink,
    frames: Option<mpsc::Sender<(u32, PixelBuffer)>>,
}

/// Runs display `display_id` on `listener` until the coordinator shuts the
/// wall down or `stop` is raised.
pub fn run_display(
    config: &WallConfig,
    display_id: usize,
    listener: TcpListener,
    mut sink: Box<dyn FrameSink>,
    options: DisplayOptions,
    stop: StopSignal,
    stats: Arc<DisplayStats>,
) -> Result<(), ServiceError> {
    let region = config
        .display_region(display_id)
        .map_err(|e| ServiceError::Invalid(e.to_string()))?;
    let control = ControlLink::join(config, Role::Display, display_id as u32, Arc::default())?;
    let expected = match config.mode {
        Mode::Dispatcher => ExpectedPeers::Exactly(1),
        Mode::Direct => ExpectedPeers::FromHandshake,
    };
    let group_options = GroupOptions {
        handshake_timeout: options.handshake_timeout,
        first_peer_timeout: None,
        traffic: stats.traffic.clone(),
        ..Default::default()
    };
    let threads = options.decomp_threads.max(1);
    info!("display {display_id} up: region {region}, {threads} decompression thread(s)");

    let (tx, rx) = mpsc::channel::<(u32, PixelBuffer)>();
    let wants_pixels = sink.wants_pixels();
    let presenter = thread::Builder::new()
        .name(format!("dw2-sink-{display_id}"))
        .spawn(move || {
            for (frame, pixels) in rx {
                if let Err(e) = sink.present(display_id, frame, &pixels) {
                    warn!("display {display_id} sink: {e}");
                }
            }
        })?;

    let shared = Shared {
        id: display_id,
        fb: Mutex::new(DisplayFramebuffer::new(display_id, region)),
        current: AtomicU32::new(0),
        stats: &stats,
        control: &control,
        frames: wants_pixels.then_some(tx),
    };

    let mut pending: Option<u64> = None;
    let result = loop {
        let token = match pending.take() {
            Some(t) => t,
            None => match control.wait_token(&stop) {
                Ok(Some(t)) => t,
                Ok(None) => break Ok(()),
                Err(e) => break Err(e),
            },
        };
        let cancel = || stop.is_stopped() || control.has_pending();
        let group = match accept_group(&listener, token, expected, &group_options, &cancel) {
            Ok(g) => g,
            Err(GroupError::Cancelled) => continue,
            Err(e) => {
                warn!("display {display_id}: session setup failed: {e}");
                let _ = control.send(&Message::Shutdown);
                continue;
            }
        };
        bump(&stats.sessions, 1);
        debug!("display {display_id}: session with {} peer(s)", group.len());
        match run_session(&shared, group, threads, &stop) {
            Ok(SessionEnd::Finished) => {}
            Ok(SessionEnd::NewToken(t)) => pending = Some(t),
            Ok(SessionEnd::Shutdown) => break Ok(()),
            Err(e) => break Err(e),
        }
        if let Err(e) = control.send(&Message::Shutdown) {
            break Err(e);
        }
    };
    let Shared { frames, .. } = shared;
    drop(frames);
    let _ = presenter.join();
    control.close();
    result
}

enum SessionEnd {
    Finished,
    NewToken(u64),
    Shutdown,
}

fn run_session(shared: &Shared<'_>, group: SocketGroup, threads: usize, stop: &StopSignal) -> Result<SessionEnd, ServiceError> {
    {
        let mut fb = shared.fb.lock().unwrap_or_else(|p| p.into_inner());
        fb.begin_frame(0);
        shared.current.store(0, Ordering::SeqCst);
    }
    let inbox = group.incoming();
    let mut end = SessionEnd::Finished;
    let mut error = None;
    thread::scope(|s| {
        let workers: Vec<_> = (0..threads)
            .map(|_| {
                let inbox = &inbox;
                s.spawn(move || worker(shared, inbox))
            })
            .collect();
        while !workers.iter().all(|w| w.is_finished()) {
            if stop.is_stopped() {
                end = SessionEnd::Shutdown;
                inbox.close();
            }
            match shared.control.next(POLL) {
                Some(ControlEvent::Token(t)) => end = SessionEnd::NewToken(t),
                Some(ControlEvent::Shutdown) => {
                    end = SessionEnd::Shutdown;
                    inbox.close();
                }
                Some(ControlEvent::Lost(e)) => {
                    if !stop.is_stopped() {
                        error = Some(ServiceError::CoordinatorLost(e));
                    }
                    inbox.close();
                }
                None => {}
            }
        }
    });
    drop(group);
    match error {
        Some(e) => Err(e),
        None => Ok(end),
    }
}

fn worker(shared: &Shared<'_>, inbox: &TimestampedMailbox<Envelope>) {
    let stats = shared.stats;
    loop {
        let frame = shared.current.load(Ordering::SeqCst);
        let env = match inbox.pop_for_frame_unless(frame, || shared.current.load(Ordering::SeqCst) != frame) {
            Ok(env) => env,
            Err(PopError::Closed) => return,
            Err(_) => continue,
        };
        let Delivery::Message(Message::Tile { header, payload }) = env.delivery else {
            continue;
        };
        bump(&stats.tiles, 1);
        bump(&stats.payload_bytes, payload.len() as u64);
        while stats.is_paused() && !inbox.is_closed() {
            thread::sleep(Duration::from_millis(1));
        }
        let pixels = match codec::decompress(header.codec, &payload, header.width, header.height) {
            Ok(p) => p,
            Err(e) => {
                warn!("display {}: dropping malformed tile {}: {e}", shared.id, header.rect());
                bump(&stats.malformed_tiles, 1);
                continue;
            }
        };
        let mut fb = shared.fb.lock().unwrap_or_else(|p| p.into_inner());
        match fb.write_tile(&header, &pixels) {
            Ok(n) => {
                bump(&stats.pixels_written, n);
                if n > 0 && fb.is_complete() {
                    complete(shared, &mut fb, inbox);
                }
            }
            Err(WriteError::WrongFrame { .. }) => bump(&stats.late_tiles, 1),
            Err(e) => {
                warn!("display {}: {e}", shared.id);
                bump(&stats.malformed_tiles, 1);
            }
        }
    }
}

fn complete(shared: &Shared<'_>, fb: &mut DisplayFramebuffer, inbox: &TimestampedMailbox<Envelope>) {
    let frame = fb.frame_id();
    let report = Message::DisplayFrameComplete {
        frame_id: frame,
        display_id: shared.id as u32,
    };
    if let Err(e) = shared.control.send(&report) {
        warn!("display {}: {e}", shared.id);
    }
    if let Some(tx) = &shared.frames {
        let _ = tx.send((frame, fb.pixels().clone()));
    }
    bump(&shared.stats.frames_completed, 1);
    fb.begin_frame(frame + 1);
    shared.current.store(frame + 1, Ordering::SeqCst);
    let late = inbox.drain_before(frame + 1).len();
    bump(&shared.stats.late_tiles, late as u64);
    inbox.notify_all();
}
