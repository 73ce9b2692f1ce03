// SPDX-License-Identifier: Apache-2.0

//! Socket groups: a set of TCP connections managed as one logical channel.
//!
//! Each connection is served by a pair of threads. The send worker drains a
//! per-connection outgoing mailbox and writes frames; the receive worker
//! decodes frames and posts them into the group's shared incoming mailbox,
//! tiles under their frame id and everything else under [`CONTROL_FRAME`].
//!
//! Groups form through a handshake: every connecting peer sends
//! `Register{token, rank, count}` and waits for `RegisterAck`. A rejected
//! peer receives `Shutdown` instead.

use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use dw2_core::protocol::{self, DecodeError, EncodeError, LENGTH_PREFIX};
use dw2_core::{Endpoint, Message};
use log::{debug, trace, warn};

use crate::mailbox::{TimestampedMailbox, CONTROL_FRAME};

pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(30);
const ACCEPT_POLL: Duration = Duration::from_millis(2);
const READ_BUFFER: usize = 64 * 1024;
const WRITE_BUFFER: usize = 64 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum GroupError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("connecting to {endpoint}: {source}")]
    Connect { endpoint: Endpoint, source: io::Error },
    #[error("handshake timed out")]
    Timeout,
    #[error("{0} rejected the session token")]
    TokenRejected(String),
    #[error("duplicate peer rank {0}")]
    DuplicatePeer(u32),
    #[error("peer announced {got} peers, group expects {expected}")]
    PeerCountMismatch { expected: u32, got: u32 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("encode: {0}")]
    Encode(#[from] EncodeError),
    #[error("group failed: {0}")]
    Failed(String),
    #[error("no member {0}")]
    NoSuchMember(usize),
    #[error("cancelled")]
    Cancelled,
}

/// Wire traffic counters, shared by every connection of a role.
#[derive(Debug, Default)]
pub struct Traffic {
    pub bytes_in: AtomicU64,
    pub bytes_out: AtomicU64,
    pub messages_in: AtomicU64,
    pub messages_out: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrafficSnapshot {
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub messages_in: u64,
    pub messages_out: u64,
}

impl Traffic {
    pub fn snapshot(&self) -> TrafficSnapshot {
        TrafficSnapshot {
            bytes_in: self.bytes_in.load(Ordering::Relaxed),
            bytes_out: self.bytes_out.load(Ordering::Relaxed),
            messages_in: self.messages_in.load(Ordering::Relaxed),
            messages_out: self.messages_out.load(Ordering::Relaxed),
        }
    }

    fn sent(&self, bytes: usize) {
        self.bytes_out.fetch_add(bytes as u64, Ordering::Relaxed);
        self.messages_out.fetch_add(1, Ordering::Relaxed);
    }

    fn received(&self, bytes: usize) {
        self.bytes_in.fetch_add(bytes as u64, Ordering::Relaxed);
        self.messages_in.fetch_add(1, Ordering::Relaxed);
    }
}

impl TrafficSnapshot {
    pub fn total(&self) -> u64 {
        self.bytes_in + self.bytes_out
    }
}

#[derive(Debug)]
pub enum Delivery {
    Message(Message),
    /// The peer closed or the connection broke. Only posted by connections
    /// spawned with disconnect reporting.
    Disconnected { error: Option<String> },
}

/// One item of an incoming mailbox.
#[derive(Debug)]
pub struct Envelope {
    pub member: usize,
    pub delivery: Delivery,
}

/// Writes one message as a frame, returning the bytes written.
pub fn write_message(w: &mut impl Write, message: &Message) -> Result<usize, GroupError> {
    let frame = protocol::encode(message)?;
    w.write_all(&frame)?;
    Ok(frame.len())
}

/// Reads one frame. `Ok(None)` is a clean end of stream at a frame boundary.
pub fn read_message(r: &mut impl Read) -> Result<Option<(Message, usize)>, GroupError> {
    let mut prefix = [0u8; LENGTH_PREFIX];
    let mut got = 0;
    while got < LENGTH_PREFIX {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(GroupError::Io(ErrorKind::UnexpectedEof.into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = protocol::frame_length(prefix)?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let message = protocol::decode_body(&body)?;
    Ok(Some((message, LENGTH_PREFIX + len)))
}

#[derive(Debug, Default)]
struct Failure {
    failed: AtomicBool,
    reason: Mutex<Option<String>>,
}

impl Failure {
    fn set(&self, reason: String) {
        let mut r = self.reason.lock().unwrap_or_else(|p| p.into_inner());
        if r.is_none() {
            *r = Some(reason);
        }
        self.failed.store(true, Ordering::SeqCst);
    }

    fn get(&self) -> Option<String> {
        if self.failed.load(Ordering::SeqCst) {
            self.reason.lock().unwrap_or_else(|p| p.into_inner()).clone()
        } else {
            None
        }
    }
}

type Frame = Arc<Vec<u8>>;

/// One TCP connection with its send and receive workers.
pub struct Connection {
    member: usize,
    peer: Option<SocketAddr>,
    stream: TcpStream,
    outgoing: Arc<TimestampedMailbox<Frame>>,
    sender: Option<JoinHandle<()>>,
    receiver: Option<JoinHandle<()>>,
    failure: Arc<Failure>,
}

/// Knobs for [`Connection::spawn`].
pub struct ConnectionHooks {
    /// Post a [`Delivery::Disconnected`] when the receive side ends.
    pub report_disconnect: bool,
    /// Runs once after the receive worker exits.
    pub on_exit: Option<Box<dyn FnOnce() + Send>>,
}

impl Connection {
    pub fn spawn(
        stream: TcpStream,
        member: usize,
        inbox: Arc<TimestampedMailbox<Envelope>>,
        traffic: Arc<Traffic>,
        hooks: ConnectionHooks,
    ) -> io::Result<Connection> {
        Self::spawn_with_failure(stream, member, inbox, traffic, hooks, Arc::default())
    }

    fn spawn_with_failure(
        stream: TcpStream,
        member: usize,
        inbox: Arc<TimestampedMailbox<Envelope>>,
        traffic: Arc<Traffic>,
        hooks: ConnectionHooks,
        failure: Arc<Failure>,
    ) -> io::Result<Connection> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(None)?;
        let peer = stream.peer_addr().ok();
        let outgoing: Arc<TimestampedMailbox<Frame>> = Arc::new(TimestampedMailbox::new());

        let sender = {
            let out = stream.try_clone()?;
            let queue = outgoing.clone();
            let traffic = traffic.clone();
            let failure = failure.clone();
            thread::Builder::new()
                .name(format!("dw2-send-{member}"))
                .spawn(move || {
                    // batch whatever is queued into few syscalls; flush once the queue is empty
                    let mut writer = BufWriter::with_capacity(WRITE_BUFFER, out);
                    let mut next = queue.pop_any();
                    while let Some((_, frame)) = next {
                        let mut result = writer.write_all(&frame);
                        if result.is_ok() {
                            traffic.sent(frame.len());
                        }
                        next = queue.try_pop_any();
                        if result.is_ok() && next.is_none() {
                            result = writer.flush();
                            if result.is_ok() {
                                next = queue.pop_any();
                            }
                        }
                        if let Err(e) = result {
                            debug!("send to member {member} failed: {e}");
                            failure.set(format!("member {member} disconnected: {e}"));
                            queue.close();
                            let _ = writer.get_ref().shutdown(Shutdown::Both);
                            return;
                        }
                    }
                    let _ = writer.flush();
                })?
        };

        let receiver = {
            let input = stream.try_clone()?;
            let failure = failure.clone();
            let ConnectionHooks {
                report_disconnect,
                on_exit,
            } = hooks;
            thread::Builder::new()
                .name(format!("dw2-recv-{member}"))
                .spawn(move || {
                    let mut reader = BufReader::with_capacity(READ_BUFFER, input);
                    let error = loop {
                        match read_message(&mut reader) {
                            Ok(Some((message, len))) => {
                                traffic.received(len);
                                let frame_id = match &message {
                                    Message::Tile { header, .. } => header.frame_id,
                                    _ => CONTROL_FRAME,
                                };
                                trace!("member {member} -> tag {}", message.tag());
                                let env = Envelope {
                                    member,
                                    delivery: Delivery::Message(message),
                                };
                                if inbox.post(frame_id, env).is_err() {
                                    break None;
                                }
                            }
                            Ok(None) => break None,
                            Err(e) => {
                                // corrupt stream: abort the connection
                                if !matches!(&e, GroupError::Io(io) if io.kind() == ErrorKind::UnexpectedEof) {
                                    warn!("member {member}: {e}");
                                }
                                let _ = reader.get_ref().shutdown(Shutdown::Both);
                                failure.set(format!("member {member}: {e}"));
                                break Some(e.to_string());
                            }
                        }
                    };
                    if report_disconnect {
                        let _ = inbox.post(
                            CONTROL_FRAME,
                            Envelope {
                                member,
                                delivery: Delivery::Disconnected { error },
                            },
                        );
                    }
                    if let Some(f) = on_exit {
                        f();
                    }
                })?
        };

        Ok(Connection {
            member,
            peer,
            stream,
            outgoing,
            sender: Some(sender),
            receiver: Some(receiver),
            failure,
        })
    }

    pub fn member(&self) -> usize {
        self.member
    }

    pub fn peer_addr(&self) -> Option<SocketAddr> {
        self.peer
    }

    pub fn send(&self, message: &Message) -> Result<(), GroupError> {
        self.send_frame(Arc::new(protocol::encode(message)?))
    }

    /// Queues an already encoded frame. The same frame may be queued on
    /// several connections without copying.
    pub fn send_frame(&self, frame: Frame) -> Result<(), GroupError> {
        if let Some(reason) = self.failure.get() {
            return Err(GroupError::Failed(reason));
        }
        self.outgoing
            .post(0, frame)
            .map_err(|_| GroupError::Failed(format!("member {} is closed", self.member)))
    }

    pub fn pending_sends(&self) -> usize {
        self.outgoing.len()
    }

    pub fn failure(&self) -> Option<String> {
        self.failure.get()
    }

    /// Sends everything queued, half-closes, and stops the receive worker.
    pub fn finish(&mut self) {
        self.outgoing.close();
        if let Some(s) = self.sender.take() {
            let _ = s.join();
        }
        let _ = self.stream.shutdown(Shutdown::Write);
        let _ = self.stream.shutdown(Shutdown::Read);
        if let Some(r) = self.receiver.take() {
            let _ = r.join();
        }
    }

    /// Sends everything queued, half-closes, and waits for the peer to close
    /// its side.
    pub fn finish_and_wait(&mut self, timeout: Duration) {
        self.outgoing.close();
        if let Some(s) = self.sender.take() {
            let _ = s.join();
        }
        let _ = self.stream.shutdown(Shutdown::Write);
        if let Some(r) = self.receiver.take() {
            let deadline = Instant::now() + timeout;
            while !r.is_finished() && Instant::now() < deadline {
                thread::sleep(Duration::from_millis(1));
            }
            let _ = self.stream.shutdown(Shutdown::Read);
            let _ = r.join();
        }
    }

    /// Drops pending sends and tears the connection down.
    pub fn close(&mut self) {
        self.outgoing.close();
        let _ = self.stream.shutdown(Shutdown::Both);
        if let Some(s) = self.sender.take() {
            let _ = s.join();
        }
        if let Some(r) = self.receiver.take() {
            let _ = r.join();
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.close();
    }
}

#[derive(Clone)]
pub struct GroupOptions {
    pub handshake_timeout: Duration,
    /// Keep retrying refused connections until the handshake timeout.
    pub retry_refused: bool,
    /// Maximum wait for the first peer in [`accept_group`]; `None` waits
    /// until cancelled.
    pub first_peer_timeout: Option<Duration>,
    pub traffic: Arc<Traffic>,
}

impl Default for GroupOptions {
    fn default() -> Self {
        GroupOptions {
            handshake_timeout: DEFAULT_HANDSHAKE_TIMEOUT,
            retry_refused: false,
            first_peer_timeout: Some(DEFAULT_HANDSHAKE_TIMEOUT),
            traffic: Arc::default(),
        }
    }
}

/// How many peers [`accept_group`] waits for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpectedPeers {
    Exactly(u32),
    /// Taken from the first peer's `peer_count`; later peers must agree.
    FromHandshake,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeerInfo {
    pub rank: u32,
    pub count: u32,
    pub addr: Option<SocketAddr>,
}

pub struct SocketGroup {
    members: Vec<Connection>,
    peers: Vec<PeerInfo>,
    incoming: Arc<TimestampedMailbox<Envelope>>,
    session_token: u64,
    failure: Arc<Failure>,
    traffic: Arc<Traffic>,
}

impl std::fmt::Debug for SocketGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SocketGroup")
            .field("members", &self.members.len())
            .field("peers", &self.peers)
            .finish_non_exhaustive()
    }
}

impl SocketGroup {
    fn from_streams(
        streams: Vec<(PeerInfo, TcpStream)>,
        session_token: u64,
        traffic: Arc<Traffic>,
    ) -> Result<SocketGroup, GroupError> {
        let incoming: Arc<TimestampedMailbox<Envelope>> = Arc::new(TimestampedMailbox::new());
        let live = Arc::new(AtomicUsize::new(streams.len()));
        let failure: Arc<Failure> = Arc::default();
        let mut members = Vec::with_capacity(streams.len());
        let mut peers = Vec::with_capacity(streams.len());
        for (member, (peer, stream)) in streams.into_iter().enumerate() {
            let live = live.clone();
            let inbox = incoming.clone();
            let hooks = ConnectionHooks {
                report_disconnect: false,
                on_exit: Some(Box::new(move || {
                    if live.fetch_sub(1, Ordering::SeqCst) == 1 {
                        inbox.close();
                    }
                })),
            };
            members.push(Connection::spawn_with_failure(
                stream,
                member,
                incoming.clone(),
                traffic.clone(),
                hooks,
                failure.clone(),
            )?);
            peers.push(peer);
        }
        Ok(SocketGroup {
            members,
            peers,
            incoming,
            session_token,
            failure,
            traffic,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn session_token(&self) -> u64 {
        self.session_token
    }

    /// Handshake details of each member, in member order.
    pub fn peers(&self) -> &[PeerInfo] {
        &self.peers
    }

    pub fn traffic(&self) -> &Arc<Traffic> {
        &self.traffic
    }

    /// Shared mailbox of decoded messages from every member. Closed once
    /// every member's receive side has ended.
    pub fn incoming(&self) -> Arc<TimestampedMailbox<Envelope>> {
        self.incoming.clone()
    }

    pub fn failure(&self) -> Option<String> {
        self.failure.get()
    }

    pub fn send_to(&self, member: usize, message: &Message) -> Result<(), GroupError> {
        self.send_frame_to(member, Arc::new(protocol::encode(message)?))
    }

    pub fn send_frame_to(&self, member: usize, frame: Frame) -> Result<(), GroupError> {
        self.members
            .get(member)
            .ok_or(GroupError::NoSuchMember(member))?
            .send_frame(frame)
    }

    pub fn broadcast(&self, message: &Message) -> Result<(), GroupError> {
        let frame = Arc::new(protocol::encode(message)?);
        for m in &self.members {
            m.send_frame(frame.clone())?;
        }
        Ok(())
    }

    pub fn pending_sends(&self) -> usize {
        self.members.iter().map(Connection::pending_sends).sum()
    }

    /// Flushes queued sends, half-closes every connection and stops the
    /// workers. Returns the group failure, if any occurred.
    pub fn finish(mut self) -> Result<(), GroupError> {
        for m in &mut self.members {
            m.finish();
        }
        self.incoming.close();
        match self.failure.get() {
            Some(reason) => Err(GroupError::Failed(reason)),
            None => Ok(()),
        }
    }

    /// Tears every connection down without flushing.
    pub fn close(&mut self) {
        for m in &mut self.members {
            m.close();
        }
        self.incoming.close();
    }
}

impl Drop for SocketGroup {
    fn drop(&mut self) {
        self.close();
    }
}

fn resolve(endpoint: &Endpoint) -> Result<Vec<SocketAddr>, GroupError> {
    (endpoint.host.as_str(), endpoint.port)
        .to_socket_addrs()
        .map(|a| a.collect())
        .map_err(|source| GroupError::Connect {
            endpoint: endpoint.clone(),
            source,
        })
}

/// Opens a TCP connection, retrying refusals until `deadline` if asked.
pub fn dial(endpoint: &Endpoint, deadline: Instant, retry_refused: bool) -> Result<TcpStream, GroupError> {
    let addrs = resolve(endpoint)?;
    loop {
        let mut last = io::Error::new(ErrorKind::NotFound, "no addresses");
        for addr in &addrs {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(GroupError::Timeout);
            }
            match TcpStream::connect_timeout(addr, left) {
                Ok(s) => {
                    s.set_nodelay(true)?;
                    return Ok(s);
                }
                Err(e) => last = e,
            }
        }
        let refused = matches!(last.kind(), ErrorKind::ConnectionRefused | ErrorKind::ConnectionReset);
        if !(retry_refused && refused) || Instant::now() >= deadline {
            if last.kind() == ErrorKind::TimedOut {
                return Err(GroupError::Timeout);
            }
            return Err(GroupError::Connect {
                endpoint: endpoint.clone(),
                source: last,
            });
        }
        thread::sleep(Duration::from_millis(10));
    }
}

/// Reads one message with a deadline, mapping timeouts to [`GroupError::Timeout`].
pub fn read_with_deadline(stream: &mut TcpStream, deadline: Instant) -> Result<Option<(Message, usize)>, GroupError> {
    let left = deadline.saturating_duration_since(Instant::now());
    if left.is_zero() {
        return Err(GroupError::Timeout);
    }
    stream.set_read_timeout(Some(left))?;
    let r = read_message(stream);
    stream.set_read_timeout(None)?;
    match r {
        Err(GroupError::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
            Err(GroupError::Timeout)
        }
        other => other,
    }
}

/// Connects to every endpoint, registers, and waits for each
/// acknowledgement. Members are in endpoint order.
pub fn connect_group(
    endpoints: &[Endpoint],
    session_token: u64,
    peer_rank: u32,
    peer_count: u32,
    options: &GroupOptions,
) -> Result<SocketGroup, GroupError> {
    let deadline = Instant::now() + options.handshake_timeout;
    let mut streams = Vec::with_capacity(endpoints.len());
    for endpoint in endpoints {
        let mut stream = dial(endpoint, deadline, options.retry_refused)?;
        let register = Message::Register {
            session_token,
            peer_rank,
            peer_count,
        };
        let n = write_message(&mut stream, &register)?;
        options.traffic.sent(n);
        match read_with_deadline(&mut stream, deadline)? {
            Some((Message::RegisterAck, n)) => options.traffic.received(n),
            Some((Message::Shutdown, _)) | None => {
                return Err(GroupError::TokenRejected(endpoint.to_string()))
            }
            Some((other, _)) => {
                return Err(GroupError::Protocol(format!(
                    "expected RegisterAck from {endpoint}, got tag {}",
                    other.tag()
                )))
            }
        }
        let peer = PeerInfo {
            rank: peer_rank,
            count: peer_count,
            addr: stream.peer_addr().ok(),
        };
        streams.push((peer, stream));
    }
    SocketGroup::from_streams(streams, session_token, options.traffic.clone())
}

fn reject(mut stream: TcpStream, traffic: &Traffic) {
    if let Ok(n) = write_message(&mut stream, &Message::Shutdown) {
        traffic.sent(n);
    }
    let _ = stream.shutdown(Shutdown::Both);
}

/// Accepts registrations on `listener` until the expected number of peers
/// with `session_token` have joined. Peers with a wrong token are refused and
/// do not count. Members are ordered by peer rank. `cancel` is polled while
/// waiting.
pub fn accept_group(
    listener: &TcpListener,
    session_token: u64,
    expected: ExpectedPeers,
    options: &GroupOptions,
    cancel: &dyn Fn() -> bool,
) -> Result<SocketGroup, GroupError> {
    listener.set_nonblocking(true)?;
    let started = Instant::now();
    let mut want = match expected {
        ExpectedPeers::Exactly(n) => Some(n),
        ExpectedPeers::FromHandshake => None,
    };
    let mut joined: Vec<(PeerInfo, TcpStream)> = Vec::new();
    let mut group_deadline: Option<Instant> = None;
    loop {
        if let Some(n) = want {
            if joined.len() as u32 == n {
                break;
            }
        }
        if cancel() {
            return Err(GroupError::Cancelled);
        }
        let deadline = group_deadline.or_else(|| options.first_peer_timeout.map(|t| started + t));
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(GroupError::Timeout);
        }
        let (mut stream, addr) = match listener.accept() {
            Ok(s) => s,
            Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::Interrupted => {
                thread::sleep(ACCEPT_POLL);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        let hello = read_with_deadline(&mut stream, Instant::now() + options.handshake_timeout);
        let (token, rank, count) = match hello {
            Ok(Some((
                Message::Register {
                    session_token,
                    peer_rank,
                    peer_count,
                },
                n,
            ))) => {
                options.traffic.received(n);
                (session_token, peer_rank, peer_count)
            }
            Ok(other) => {
                warn!("{addr}: expected Register, got {:?}", other.map(|(m, _)| m.tag()));
                reject(stream, &options.traffic);
                continue;
            }
            Err(e) => {
                warn!("{addr}: handshake failed: {e}");
                continue;
            }
        };
        if token != session_token {
            warn!("{addr}: wrong session token");
            reject(stream, &options.traffic);
            continue;
        }
        if count == 0 || rank >= count {
            warn!("{addr}: rank {rank} outside peer count {count}");
            reject(stream, &options.traffic);
            continue;
        }
        match want {
            None => want = Some(count),
            Some(n) if n != count => {
                reject(stream, &options.traffic);
                return Err(GroupError::PeerCountMismatch { expected: n, got: count });
            }
            Some(_) => {}
        }
        if joined.iter().any(|(p, _)| p.rank == rank) {
            reject(stream, &options.traffic);
            return Err(GroupError::DuplicatePeer(rank));
        }
        let n = write_message(&mut stream, &Message::RegisterAck)?;
        options.traffic.sent(n);
        debug!("{addr} joined as rank {rank}/{count}");
        group_deadline.get_or_insert(Instant::now() + options.handshake_timeout);
        joined.push((
            PeerInfo {
                rank,
                count,
                addr: Some(addr),
            },
            stream,
        ));
    }
    joined.sort_by_key(|(p, _)| p.rank);
    SocketGroup::from_streams(joined, session_token, options.traffic.clone())
}
