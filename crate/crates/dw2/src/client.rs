// SPDX-License-Identifier: Apache-2.0

//! Client library: query the wall, join a session, gate frames on tokens
//! and stream RGBA tiles.
//!
//! ```no_run
//! use dw2::client::{query_info, ClientOptions, ClientSession};
//! use dw2::PixelBuffer;
//!
//! let info = query_info("127.0.0.1", 7000)?;
//! let mut session = ClientSession::connect(&info, 0, 1, ClientOptions::default())?;
//! let frame = session.begin_frame()?;
//! let tile = PixelBuffer::filled(64, 64, [255, 0, 0, 255]);
//! session.send_rgba(frame, tile, 0, 0)?;
//! session.disconnect()?;
//! # Ok::<(), dw2::client::ClientError>(())
//! ```
//!
//! `send_rgba` only enqueues: a worker pool compresses the tile and hands
//! it to the socket group. In direct mode the tile goes once to every
//! display whose region it overlaps, in dispatcher mode once to the
//! dispatcher.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use dw2_core::protocol;
use dw2_core::{DirectoryEntry, Endpoint, Message, Mode, PixelBuffer, Rect};
use log::{debug, warn};

use crate::codec::{self, CodecError, Quality};
use crate::mailbox::{PopError, TimestampedMailbox};
use crate::socket_group::{
    connect_group, dial, read_with_deadline, write_message, Connection, ConnectionHooks, Delivery, Envelope,
    GroupError, GroupOptions, SocketGroup, Traffic, TrafficSnapshot, DEFAULT_HANDSHAKE_TIMEOUT,
};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("cannot reach {endpoint}: {source}")]
    Unreachable { endpoint: Endpoint, source: GroupError },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("tile {rect} exceeds the {width}x{height} virtual framebuffer")]
    OutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("frame {0} is not admitted or already complete")]
    NotAdmitted(u32),
    #[error("the coordinator rejected the registration")]
    Rejected,
    #[error("session closed: {0}")]
    SessionClosed(String),
    #[error("{0}")]
    InvalidArgument(String),
}

/// Contents of an `InfoReply`, plus the coordinator that sent it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WallInfo {
    pub virtual_width: u32,
    pub virtual_height: u32,
    pub mode: Mode,
    pub session_token: u64,
    pub frames_in_flight: u32,
    /// Set in dispatcher mode.
    pub dispatcher: Option<Endpoint>,
    /// Display directory; direct mode only.
    pub displays: Vec<DirectoryEntry>,
    pub coordinator: Endpoint,
}

pub fn query_info(host: &str, port: u16) -> Result<WallInfo, ClientError> {
    query_info_timeout(&Endpoint::new(host, port), DEFAULT_HANDSHAKE_TIMEOUT)
}

/// Asks the coordinator for the wall description. The coordinator holds
/// the reply back until the wall is ready for a new session.
pub fn query_info_timeout(coordinator: &Endpoint, timeout: Duration) -> Result<WallInfo, ClientError> {
    let deadline = Instant::now() + timeout;
    let unreachable = |source| ClientError::Unreachable {
        endpoint: coordinator.clone(),
        source,
    };
    let mut stream = dial(coordinator, deadline, false).map_err(unreachable)?;
    write_message(&mut stream, &Message::QueryInfo).map_err(unreachable)?;
    match read_with_deadline(&mut stream, deadline) {
        Ok(Some((
            Message::InfoReply {
                virtual_width,
                virtual_height,
                mode,
                session_token,
                frames_in_flight,
                dispatcher,
                displays,
            },
            _,
        ))) => {
            let consistent = match mode {
                Mode::Direct => dispatcher.is_none() && !displays.is_empty(),
                Mode::Dispatcher => dispatcher.is_some() && displays.is_empty(),
            };
            if !consistent || frames_in_flight == 0 {
                return Err(ClientError::MalformedReply(format!("inconsistent {mode} mode reply")));
            }
            Ok(WallInfo {
                virtual_width,
                virtual_height,
                mode,
                session_token,
                frames_in_flight,
                dispatcher,
                displays,
                coordinator: coordinator.clone(),
            })
        }
        Ok(Some((other, _))) => Err(ClientError::MalformedReply(format!("unexpected tag {}", other.tag()))),
        Ok(None) => Err(ClientError::MalformedReply("connection closed before the reply".into())),
        Err(GroupError::Decode(e)) => Err(ClientError::MalformedReply(e.to_string())),
        Err(e) => Err(unreachable(e)),
    }
}

#[derive(Clone, Debug)]
pub struct ClientOptions {
    pub quality: Quality,
    pub compression_threads: usize,
    /// Tiles enqueued but not yet handed to a socket; `send_rgba` blocks
    /// beyond this.
    pub max_tiles_in_flight: usize,
    pub handshake_timeout: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions {
            quality: Quality::Jpeg(75),
            compression_threads: thread::available_parallelism().map_or(1, |n| n.get()),
            max_tiles_in_flight: 256,
            handshake_timeout: DEFAULT_HANDSHAKE_TIMEOUT,
        }
    }
}

#[derive(Debug, Default)]
pub struct ClientStats {
    pub tiles_submitted: AtomicU64,
    /// Tile messages queued on sockets (a spanning tile counts once per
    /// display in direct mode).
    pub tile_messages: AtomicU64,
    pub payload_bytes: AtomicU64,
    pub raw_bytes: AtomicU64,
    /// Tiles entirely inside bezels, dropped before compression.
    pub bezel_tiles: AtomicU64,
    pub traffic: Arc<Traffic>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClientSnapshot {
    pub tiles_submitted: u64,
    pub tile_messages: u64,
    pub payload_bytes: u64,
    pub raw_bytes: u64,
    pub bezel_tiles: u64,
    pub traffic: TrafficSnapshot,
}

impl ClientStats {
    pub fn snapshot(&self) -> ClientSnapshot {
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        ClientSnapshot {
            tiles_submitted: l(&self.tiles_submitted),
            tile_messages: l(&self.tile_messages),
            payload_bytes: l(&self.payload_bytes),
            raw_bytes: l(&self.raw_bytes),
            bezel_tiles: l(&self.bezel_tiles),
            traffic: self.traffic.snapshot(),
        }
    }
}

/// Counting semaphore bounding queued tiles.
#[derive(Debug)]
struct Budget {
    used: Mutex<usize>,
    limit: usize,
    changed: Condvar,
}

impl Budget {
    fn acquire(&self) {
        let mut used = self.used.lock().unwrap_or_else(|p| p.into_inner());
        while *used >= self.limit {
            used = self.changed.wait(used).unwrap_or_else(|p| p.into_inner());
        }
        *used += 1;
    }

    fn release(&self) {
        *self.used.lock().unwrap_or_else(|p| p.into_inner()) -= 1;
        self.changed.notify_all();
    }

    fn wait_idle(&self) {
        let mut used = self.used.lock().unwrap_or_else(|p| p.into_inner());
        while *used > 0 {
            used = self.changed.wait(used).unwrap_or_else(|p| p.into_inner());
        }
    }
}

struct Job {
    frame: u32,
    rect: Rect,
    pixels: PixelBuffer,
    targets: Vec<usize>,
}

type Failure = Arc<Mutex<Option<String>>>;

pub struct ClientSession {
    info: WallInfo,
    rank: u32,
    count: u32,
    data: Option<Arc<SocketGroup>>,
    control: Option<Connection>,
    control_in: Arc<TimestampedMailbox<Envelope>>,
    admitted: u32,
    next_frame: u32,
    current: Option<u32>,
    closed: Option<String>,
    jobs: Arc<TimestampedMailbox<Job>>,
    workers: Vec<JoinHandle<()>>,
    budget: Arc<Budget>,
    failure: Failure,
    stats: Arc<ClientStats>,
}

impl ClientSession {
    /// Opens the data group (every display in direct mode, the dispatcher
    /// otherwise), then registers with the coordinator. All `peer_count`
    /// peers must connect with the same token before the first token is
    /// issued.
    pub fn connect(info: &WallInfo, peer_rank: u32, peer_count: u32, options: ClientOptions) -> Result<ClientSession, ClientError> {
        if peer_count == 0 || peer_rank >= peer_count {
            return Err(ClientError::InvalidArgument(format!("rank {peer_rank} of {peer_count} peers")));
        }
        let stats = Arc::new(ClientStats::default());
        let endpoints: Vec<Endpoint> = match info.mode {
            Mode::Direct => info.displays.iter().map(|d| d.endpoint.clone()).collect(),
            Mode::Dispatcher => info.dispatcher.iter().cloned().collect(),
        };
        let group_options = GroupOptions {
            handshake_timeout: options.handshake_timeout,
            traffic: stats.traffic.clone(),
            ..Default::default()
        };
        let data = connect_group(&endpoints, info.session_token, peer_rank, peer_count, &group_options)?;

        let deadline = Instant::now() + options.handshake_timeout;
        let unreachable = |source| ClientError::Unreachable {
            endpoint: info.coordinator.clone(),
            source,
        };
        let mut stream = dial(&info.coordinator, deadline, false).map_err(unreachable)?;
        let register = Message::Register {
            session_token: info.session_token,
            peer_rank,
            peer_count,
        };
        write_message(&mut stream, &register)?;
        match read_with_deadline(&mut stream, deadline)? {
            Some((Message::RegisterAck, _)) => {}
            Some((Message::Shutdown, _)) | None => return Err(ClientError::Rejected),
            Some((other, _)) => return Err(ClientError::MalformedReply(format!("unexpected tag {}", other.tag()))),
        }
        let control_in = Arc::new(TimestampedMailbox::new());
        let control = Connection::spawn(
            stream,
            0,
            control_in.clone(),
            Arc::default(),
            ConnectionHooks {
                report_disconnect: true,
                on_exit: None,
            },
        )?;

        let data = Arc::new(data);
        let jobs: Arc<TimestampedMailbox<Job>> = Arc::new(TimestampedMailbox::new());
        let budget = Arc::new(Budget {
            used: Mutex::new(0),
            limit: options.max_tiles_in_flight.max(1),
            changed: Condvar::new(),
        });
        let failure: Failure = Arc::default();
        let workers = (0..options.compression_threads.max(1))
            .map(|i| {
                let (jobs, data, budget, failure, stats) =
                    (jobs.clone(), data.clone(), budget.clone(), failure.clone(), stats.clone());
                let quality = options.quality;
                thread::Builder::new()
                    .name(format!("dw2-compress-{i}"))
                    .spawn(move || compress_worker(&jobs, &data, quality, &budget, &failure, &stats))
            })
            .collect::<Result<Vec<_>, _>>()?;

        Ok(ClientSession {
            info: info.clone(),
            rank: peer_rank,
            count: peer_count,
            data: Some(data),
            control: Some(control),
            control_in,
            admitted: 0,
            next_frame: 0,
            current: None,
            closed: None,
            jobs,
            workers,
            budget,
            failure,
            stats,
        })
    }

    pub fn info(&self) -> &WallInfo {
        &self.info
    }

    pub fn peer_rank(&self) -> u32 {
        self.rank
    }

    pub fn peer_count(&self) -> u32 {
        self.count
    }

    /// Number of frames admitted so far (id of the next token).
    pub fn admitted(&self) -> u32 {
        self.admitted
    }

    pub fn current_frame(&self) -> Option<u32> {
        self.current
    }

    pub fn stats(&self) -> ClientSnapshot {
        self.stats.snapshot()
    }

    fn handle(&mut self, env: Envelope) {
        match env.delivery {
            Delivery::Message(Message::NextFrameToken { frame_id }) => {
                self.admitted = self.admitted.max(frame_id.saturating_add(1));
            }
            Delivery::Message(Message::Shutdown) => {
                self.closed.get_or_insert_with(|| "the coordinator ended the session".into());
            }
            Delivery::Message(other) => debug!("ignoring control tag {}", other.tag()),
            Delivery::Disconnected { error } => {
                self.closed
                    .get_or_insert_with(|| error.unwrap_or_else(|| "coordinator closed the connection".into()));
            }
        }
    }

    fn pump(&mut self) {
        while let Some((_, env)) = self.control_in.try_pop_any() {
            self.handle(env);
        }
    }

    fn check_failed(&self) -> Result<(), ClientError> {
        if let Some(f) = self.failure.lock().unwrap_or_else(|p| p.into_inner()).clone() {
            return Err(ClientError::SessionClosed(f));
        }
        Ok(())
    }

    /// Waits until `done` holds; `Ok(false)` on timeout.
    fn wait_until(&mut self, done: impl Fn(&Self) -> bool, timeout: Option<Duration>) -> Result<bool, ClientError> {
        let deadline = timeout.map(|t| Instant::now() + t);
        loop {
            self.pump();
            if done(self) {
                return Ok(true);
            }
            if let Some(why) = &self.closed {
                return Err(ClientError::SessionClosed(why.clone()));
            }
            self.check_failed()?;
            let wait = match deadline {
                Some(d) => {
                    let left = d.saturating_duration_since(Instant::now());
                    if left.is_zero() {
                        return Ok(false);
                    }
                    left.min(Duration::from_millis(100))
                }
                None => Duration::from_millis(100),
            };
            match self.control_in.pop_any_timeout(wait) {
                Ok((_, env)) => self.handle(env),
                Err(PopError::Closed) => {
                    self.closed.get_or_insert_with(|| "control link closed".into());
                }
                Err(_) => {}
            }
        }
    }

    /// Blocks until the next frame is admitted and returns its id.
    pub fn begin_frame(&mut self) -> Result<u32, ClientError> {
        loop {
            if let Some(f) = self.begin_frame_timeout(Duration::from_secs(3600))? {
                return Ok(f);
            }
        }
    }

    /// Like [`begin_frame`](Self::begin_frame), but gives up after
    /// `timeout` with `Ok(None)`; the frame is then still the next one.
    pub fn begin_frame_timeout(&mut self, timeout: Duration) -> Result<Option<u32>, ClientError> {
        let frame = self.next_frame;
        if !self.wait_until(|s| s.admitted > frame, Some(timeout))? {
            return Ok(None);
        }
        self.next_frame += 1;
        self.current = Some(frame);
        Ok(Some(frame))
    }

    fn frame_complete(&self, frame: u32) -> bool {
        self.admitted as u64 > frame as u64 + self.info.frames_in_flight as u64
    }

    /// Waits until every display finished `frame`. `Ok(false)` on timeout.
    pub fn wait_frame_complete(&mut self, frame: u32, timeout: Duration) -> Result<bool, ClientError> {
        self.wait_until(|s| s.frame_complete(frame), Some(timeout))
    }

    /// Enqueues one RGBA tile at (`x`, `y`) of the virtual framebuffer.
    /// Returns once the tile is queued for compression.
    pub fn send_rgba(&mut self, frame: u32, pixels: PixelBuffer, x: u32, y: u32) -> Result<(), ClientError> {
        self.check_failed()?;
        if pixels.is_empty() {
            return Err(ClientError::InvalidArgument("empty tile".into()));
        }
        let rect = Rect::new(x, y, pixels.width(), pixels.height());
        if rect.right() > self.info.virtual_width as u64 || rect.bottom() > self.info.virtual_height as u64 {
            return Err(ClientError::OutOfBounds {
                rect,
                width: self.info.virtual_width,
                height: self.info.virtual_height,
            });
        }
        self.pump();
        if let Some(why) = &self.closed {
            return Err(ClientError::SessionClosed(why.clone()));
        }
        if !self.current.is_some_and(|c| frame <= c) || self.frame_complete(frame) {
            return Err(ClientError::NotAdmitted(frame));
        }
        let targets: Vec<usize> = match self.info.mode {
            Mode::Direct => self
                .info
                .displays
                .iter()
                .enumerate()
                .filter(|(_, d)| d.region.intersect(&rect).is_some())
                .map(|(i, _)| i)
                .collect(),
            // the dispatcher routes and drops bezel-only tiles itself
            Mode::Dispatcher => vec![0],
        };
        self.stats.tiles_submitted.fetch_add(1, Ordering::Relaxed);
        if targets.is_empty() {
            self.stats.bezel_tiles.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        }
        self.budget.acquire();
        let job = Job {
            frame,
            rect,
            pixels,
            targets,
        };
        if self.jobs.post(frame, job).is_err() {
            self.budget.release();
            return Err(ClientError::SessionClosed("session is shutting down".into()));
        }
        Ok(())
    }

    /// Waits until every enqueued tile has been compressed and queued on
    /// its sockets.
    pub fn flush(&mut self) -> Result<(), ClientError> {
        self.budget.wait_idle();
        self.check_failed()
    }

    /// Flushes pending tiles, closes the data connections and tells the
    /// coordinator this peer is done.
    pub fn disconnect(mut self) -> Result<ClientSnapshot, ClientError> {
        let result = self.teardown(true);
        result.map(|()| self.stats.snapshot())
    }

    fn teardown(&mut self, graceful: bool) -> Result<(), ClientError> {
        self.jobs.close();
        if !graceful {
            // drop queued work
            while let Some(_job) = self.jobs.try_pop_any() {
                self.budget.release();
            }
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
        let mut result = self.check_failed();
        if let Some(data) = self.data.take() {
            match Arc::try_unwrap(data) {
                Ok(group) if graceful => {
                    if let Err(e) = group.finish() {
                        result = result.and(Err(e.into()));
                    }
                }
                Ok(mut group) => group.close(),
                Err(_) => warn!("data group still shared at disconnect"),
            }
        }
        if let Some(mut control) = self.control.take() {
            if graceful && self.closed.is_none() {
                let _ = control.send(&Message::Shutdown);
                // the coordinator closes its side once it processed the Shutdown
                control.finish_and_wait(Duration::from_secs(10));
            } else {
                control.close();
            }
        }
        result
    }
}

impl Drop for ClientSession {
    fn drop(&mut self) {
        if self.control.is_some() || self.data.is_some() {
            let _ = self.teardown(false);
        }
    }
}

fn compress_worker(
    jobs: &TimestampedMailbox<Job>,
    data: &SocketGroup,
    quality: Quality,
    budget: &Budget,
    failure: &Mutex<Option<String>>,
    stats: &ClientStats,
) {
    while let Some((_, job)) = jobs.pop_any() {
        let result = (|| -> Result<(), ClientError> {
            let (codec, payload) = codec::compress(&job.pixels, quality)?;
            let len = payload.len() as u64;
            let frame = Arc::new(protocol::encode(&Message::tile(job.frame, job.rect, codec, payload)).map_err(GroupError::from)?);
            for &t in &job.targets {
                data.send_frame_to(t, frame.clone())?;
                stats.tile_messages.fetch_add(1, Ordering::Relaxed);
                stats.payload_bytes.fetch_add(len, Ordering::Relaxed);
            }
            stats.raw_bytes.fetch_add(job.pixels.as_bytes().len() as u64, Ordering::Relaxed);
            Ok(())
        })();
        if let Err(e) = result {
            warn!("tile {} of frame {}: {e}", job.rect, job.frame);
            failure.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(e.to_string());
        }
        budget.release();
    }
}
