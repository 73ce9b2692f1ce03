// SPDX-License-Identifier: Apache-2.0

//! Coordinator: information server and frame-token issuer.
//!
//! Sessions move Idle -> Active -> Draining -> Idle. A session becomes
//! Active once `peer_count` clients registered with the current token; it
//! drains once every client said `Shutdown` (or was lost). Draining waits
//! for each display to report the end of its session, then a fresh token is
//! handed to the displays (and dispatcher) and queued queries are answered.
//! Queries are held back while the wall is not ready or draining, so a new
//! client never sees a token the displays are not yet listening for.

use std::collections::{BTreeMap, HashMap};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use dw2_core::{DirectoryEntry, Message, Mode, Role, TokenWindow, WallConfig, Completion};
use log::{debug, info, warn};

use super::{ServiceError, StopSignal, POLL};
use crate::mailbox::{PopError, TimestampedMailbox};
use crate::socket_group::{Connection, ConnectionHooks, Delivery, Envelope, Traffic, TrafficSnapshot};

const DRAIN_TIMEOUT: Duration = Duration::from_secs(5);

/// Timing of one client session as seen by the coordinator.
#[derive(Clone, Debug)]
pub struct SessionRecord {
    pub clients: u32,
    /// When the first tokens were issued.
    pub started: Instant,
    /// Completion instant of frame `i` (= issue of token `i + frames_in_flight`).
    pub completions: Vec<Instant>,
    pub duplicate_reports: u64,
    pub aborted: bool,
    pub finished: bool,
}

impl SessionRecord {
    pub fn frames(&self) -> usize {
        self.completions.len()
    }

    /// Frames per second from session start to the last completion.
    pub fn fps(&self) -> Option<f64> {
        let last = self.completions.last()?;
        let secs = last.duration_since(self.started).as_secs_f64();
        (secs > 0.0).then(|| self.completions.len() as f64 / secs)
    }

    /// Time between consecutive completions, the first measured from the
    /// session start.
    pub fn frame_intervals(&self) -> Vec<Duration> {
        let mut prev = self.started;
        self.completions
            .iter()
            .map(|&t| {
                let d = t.duration_since(prev);
                prev = t;
                d
            })
            .collect()
    }
}

#[derive(Debug, Default)]
pub struct CoordinatorStats {
    sessions: Mutex<Vec<SessionRecord>>,
    pub traffic: Arc<Traffic>,
}

impl CoordinatorStats {
    pub fn sessions(&self) -> Vec<SessionRecord> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn last_session(&self) -> Option<SessionRecord> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner()).last().cloned()
    }

    pub fn traffic(&self) -> TrafficSnapshot {
        self.traffic.snapshot()
    }

    fn with_current(&self, f: impl FnOnce(&mut SessionRecord)) {
        if let Some(s) = self.sessions.lock().unwrap_or_else(|p| p.into_inner()).last_mut() {
            f(s);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Peer {
    Pending,
    Query,
    Display(usize),
    Dispatcher,
    Client(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Idle,
    Active,
    Draining(Instant),
}

type ConnMap = Arc<Mutex<HashMap<usize, Connection>>>;

struct Coordinator<'a> {
    config: &'a WallConfig,
    conns: ConnMap,
    peers: HashMap<usize, Peer>,
    displays: Vec<Option<usize>>,
    dispatcher: Option<usize>,
    announced: bool,
    token: u64,
    state: State,
    deferred: Vec<usize>,
    clients: BTreeMap<u32, usize>,
    client_count: Option<u32>,
    done: usize,
    window: Option<TokenWindow>,
    ended: Vec<bool>,
    stats: Arc<CoordinatorStats>,
}

/// Runs the coordinator on `listener` until `stop` is raised or a display
/// is lost.
pub fn run_coordinator(
    config: &WallConfig,
    listener: TcpListener,
    stop: StopSignal,
    stats: Arc<CoordinatorStats>,
) -> Result<(), ServiceError> {
    let events: Arc<TimestampedMailbox<Envelope>> = Arc::new(TimestampedMailbox::new());
    let conns: ConnMap = Arc::default();
    listener.set_nonblocking(true)?;
    let acceptor = {
        let (events, conns, stop, traffic) = (events.clone(), conns.clone(), stop.clone(), stats.traffic.clone());
        thread::Builder::new()
            .name("dw2-coord-accept".into())
            .spawn(move || accept_loop(listener, events, conns, stop, traffic))?
    };
    let mut c = Coordinator {
        config,
        conns: conns.clone(),
        peers: HashMap::new(),
        displays: vec![None; config.display_count()],
        dispatcher: None,
        announced: false,
        token: rand::random(),
        state: State::Idle,
        deferred: Vec::new(),
        clients: BTreeMap::new(),
        client_count: None,
        done: 0,
        window: None,
        ended: vec![false; config.display_count()],
        stats,
    };
    info!(
        "coordinator up: {} mode, {} displays, {}x{} virtual",
        config.mode,
        config.display_count(),
        config.virtual_size().0,
        config.virtual_size().1
    );
    let result = c.run(&events, &stop);
    stop.stop();
    c.shutdown_all();
    let _ = acceptor.join();
    events.close();
    result
}

fn accept_loop(
    listener: TcpListener,
    events: Arc<TimestampedMailbox<Envelope>>,
    conns: ConnMap,
    stop: StopSignal,
    traffic: Arc<Traffic>,
) {
    let mut next = 0usize;
    while !stop.is_stopped() {
        match listener.accept() {
            Ok((stream, addr)) => {
                let _ = stream.set_nonblocking(false);
                let mut map = conns.lock().unwrap_or_else(|p| p.into_inner());
                let hooks = ConnectionHooks {
                    report_disconnect: true,
                    on_exit: None,
                };
                match Connection::spawn(stream, next, events.clone(), traffic.clone(), hooks) {
                    Ok(conn) => {
                        debug!("control connection {next} from {addr}");
                        map.insert(next, conn);
                        next += 1;
                    }
                    Err(e) => warn!("control connection from {addr}: {e}"),
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
            Err(e) => {
                warn!("accept: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

impl Coordinator<'_> {
    fn run(&mut self, events: &TimestampedMailbox<Envelope>, stop: &StopSignal) -> Result<(), ServiceError> {
        loop {
            if stop.is_stopped() {
                return Ok(());
            }
            match events.pop_any_timeout(POLL) {
                Ok((_, env)) => {
                    let peer = *self.peers.entry(env.member).or_insert(Peer::Pending);
                    match env.delivery {
                        Delivery::Message(m) => self.on_message(env.member, peer, m)?,
                        // roles leave on their own once the wall stops
                        Delivery::Disconnected { .. } if stop.is_stopped() => return Ok(()),
                        Delivery::Disconnected { error } => self.on_disconnect(env.member, peer, error)?,
                    }
                }
                Err(PopError::Timeout) | Err(PopError::Interrupted) => {}
                Err(PopError::Closed) => return Ok(()),
            }
            self.check_drain();
        }
    }

    fn ready(&self) -> bool {
        self.displays.iter().all(Option::is_some)
            && (self.config.mode == Mode::Direct || self.dispatcher.is_some())
    }

    fn send(&self, member: usize, message: &Message) {
        if let Some(c) = self.conns.lock().unwrap_or_else(|p| p.into_inner()).get(&member) {
            if let Err(e) = c.send(message) {
                debug!("send to connection {member}: {e}");
            }
        }
    }

    /// Flushes and closes one connection.
    fn finish(&mut self, member: usize) {
        self.peers.remove(&member);
        let conn = self.conns.lock().unwrap_or_else(|p| p.into_inner()).remove(&member);
        if let Some(mut c) = conn {
            c.finish();
        }
    }

    fn info_reply(&self) -> Message {
        let (w, h) = self.config.virtual_size();
        let direct = self.config.mode == Mode::Direct;
        Message::InfoReply {
            virtual_width: w,
            virtual_height: h,
            mode: self.config.mode,
            session_token: self.token,
            frames_in_flight: self.config.frames_in_flight,
            dispatcher: (!direct).then(|| self.config.dispatcher.clone()),
            displays: if direct {
                self.config
                    .displays
                    .iter()
                    .map(|d| DirectoryEntry {
                        display_id: d.display_id as u32,
                        endpoint: d.endpoint.clone(),
                        region: self.config.display_region(d.display_id).expect("valid display"),
                    })
                    .collect()
            } else {
                Vec::new()
            },
        }
    }

    /// Hands the current token to the service roles and answers held-back
    /// queries.
    fn announce(&mut self) {
        let reply = self.info_reply();
        for member in self.displays.iter().flatten().chain(self.dispatcher.iter()) {
            self.send(*member, &reply);
        }
        for member in std::mem::take(&mut self.deferred) {
            if self.peers.contains_key(&member) {
                self.send(member, &reply);
            }
        }
        self.announced = true;
    }

    fn reject(&mut self, member: usize, why: &str) {
        warn!("connection {member}: {why}");
        self.send(member, &Message::Shutdown);
        self.finish(member);
    }

    fn on_message(&mut self, member: usize, peer: Peer, message: Message) -> Result<(), ServiceError> {
        match (peer, message) {
            (Peer::Pending, Message::Join { role, index }) => self.on_join(member, role, index),
            (Peer::Pending | Peer::Query, Message::QueryInfo) => {
                self.peers.insert(member, Peer::Query);
                if self.announced && self.ready() && !matches!(self.state, State::Draining(_)) {
                    let reply = self.info_reply();
                    self.send(member, &reply);
                } else {
                    self.deferred.push(member);
                }
            }
            (
                Peer::Pending | Peer::Query,
                Message::Register {
                    session_token,
                    peer_rank,
                    peer_count,
                },
            ) => self.on_register(member, session_token, peer_rank, peer_count),
            (Peer::Display(d), Message::DisplayFrameComplete { frame_id, display_id }) => {
                if display_id as usize != d {
                    warn!("display {d} reported completion as display {display_id}");
                    return Ok(());
                }
                self.on_complete(frame_id, d);
            }
            (Peer::Display(d), Message::Shutdown) => {
                if self.state != State::Idle {
                    debug!("display {d} ended its session");
                    self.ended[d] = true;
                }
            }
            (Peer::Client(rank), Message::Shutdown) => {
                debug!("client {rank} finished");
                self.finish(member);
                self.client_gone(rank);
            }
            (peer, m) => warn!("unexpected message tag {} from {peer:?} (connection {member})", m.tag()),
        }
        Ok(())
    }

    fn on_join(&mut self, member: usize, role: Role, index: u32) {
        let slot = match role {
            Role::Display => self.displays.get_mut(index as usize),
            Role::Dispatcher if self.config.mode == Mode::Dispatcher && index == 0 => Some(&mut self.dispatcher),
            Role::Dispatcher => None,
        };
        match slot {
            Some(s) if s.is_none() && !self.announced => {
                *s = Some(member);
                self.peers.insert(
                    member,
                    match role {
                        Role::Display => Peer::Display(index as usize),
                        Role::Dispatcher => Peer::Dispatcher,
                    },
                );
                info!("{role:?} {index} joined");
                if self.ready() {
                    info!("all service roles joined; wall ready");
                    self.announce();
                }
            }
            _ => self.reject(member, &format!("unexpected join of {role:?} {index}")),
        }
    }

    fn on_register(&mut self, member: usize, token: u64, rank: u32, count: u32) {
        if self.state != State::Idle || !self.announced {
            return self.reject(member, "registration outside an open session");
        }
        if token != self.token {
            return self.reject(member, "registration with a stale token");
        }
        if count == 0 || rank >= count || self.client_count.is_some_and(|c| c != count) {
            return self.reject(member, &format!("inconsistent registration rank {rank}/{count}"));
        }
        if self.clients.contains_key(&rank) {
            return self.reject(member, &format!("duplicate client rank {rank}"));
        }
        self.client_count = Some(count);
        self.clients.insert(rank, member);
        self.peers.insert(member, Peer::Client(rank));
        self.send(member, &Message::RegisterAck);
        if self.clients.len() as u32 == count {
            self.start_session(count);
        }
    }

    fn start_session(&mut self, count: u32) {
        let mut window = TokenWindow::new(self.config.frames_in_flight, self.config.display_count());
        let tokens = window.start();
        self.window = Some(window);
        self.state = State::Active;
        self.done = 0;
        self.ended.iter_mut().for_each(|e| *e = false);
        self.stats.sessions.lock().unwrap_or_else(|p| p.into_inner()).push(SessionRecord {
            clients: count,
            started: Instant::now(),
            completions: Vec::new(),
            duplicate_reports: 0,
            aborted: false,
            finished: false,
        });
        info!("session started with {count} client(s)");
        for f in tokens {
            self.broadcast_clients(&Message::NextFrameToken { frame_id: f });
        }
    }

    fn broadcast_clients(&self, message: &Message) {
        let Ok(frame) = dw2_core::protocol::encode(message) else { return };
        let frame = Arc::new(frame);
        let conns = self.conns.lock().unwrap_or_else(|p| p.into_inner());
        for member in self.clients.values() {
            if let Some(c) = conns.get(member) {
                let _ = c.send_frame(frame.clone());
            }
        }
    }

    fn on_complete(&mut self, frame_id: u32, display: usize) {
        if self.state == State::Idle {
            debug!("completion of frame {frame_id} outside a session");
            return;
        }
        let Some(window) = self.window.as_mut() else { return };
        match window.report(frame_id, display) {
            Completion::Advanced { completed, admit } => {
                let now = Instant::now();
                self.stats.with_current(|s| s.completions.extend(completed.map(|_| now)));
                if self.state == State::Active {
                    for f in admit {
                        self.broadcast_clients(&Message::NextFrameToken { frame_id: f });
                    }
                }
            }
            Completion::Pending { .. } => {}
            Completion::Duplicate => self.stats.with_current(|s| s.duplicate_reports += 1),
            other => warn!("display {display} reported frame {frame_id}: {other:?}"),
        }
    }

    fn client_gone(&mut self, rank: u32) {
        if self.clients.remove(&rank).is_none() {
            return;
        }
        match self.state {
            State::Idle => {
                if self.clients.is_empty() {
                    self.client_count = None;
                }
            }
            State::Active => {
                self.done += 1;
                if self.clients.is_empty() {
                    self.begin_drain();
                }
            }
            State::Draining(_) => {}
        }
    }

    fn on_disconnect(&mut self, member: usize, peer: Peer, error: Option<String>) -> Result<(), ServiceError> {
        let why = error.unwrap_or_else(|| "closed".into());
        match peer {
            Peer::Display(d) => {
                log::error!("display {d} lost ({why}); shutting the wall down");
                return Err(ServiceError::DisplayLost(d));
            }
            Peer::Dispatcher => {
                log::error!("dispatcher lost ({why}); shutting the wall down");
                return Err(ServiceError::DispatcherLost);
            }
            Peer::Client(rank) => {
                self.finish(member);
                if self.state == State::Active {
                    warn!("client {rank} lost ({why}); aborting the session");
                    self.stats.with_current(|s| s.aborted = true);
                    let rest: Vec<(u32, usize)> = self.clients.iter().map(|(r, m)| (*r, *m)).filter(|(r, _)| *r != rank).collect();
                    for (r, m) in rest {
                        self.send(m, &Message::Shutdown);
                        self.finish(m);
                        self.clients.remove(&r);
                    }
                }
                self.client_gone(rank);
            }
            Peer::Pending | Peer::Query => {
                self.deferred.retain(|m| *m != member);
                self.finish(member);
            }
        }
        Ok(())
    }

    fn begin_drain(&mut self) {
        self.stats.with_current(|s| s.finished = true);
        self.state = State::Draining(Instant::now() + DRAIN_TIMEOUT);
        self.check_drain();
    }

    fn check_drain(&mut self) {
        let State::Draining(deadline) = self.state else { return };
        let all = self.ended.iter().all(|&e| e);
        if !all && Instant::now() < deadline {
            return;
        }
        if !all {
            warn!("displays {:?} did not end their session in time", self.ended.iter().enumerate().filter(|(_, e)| !**e).map(|(i, _)| i).collect::<Vec<_>>());
        }
        self.token = rand::random();
        self.state = State::Idle;
        self.window = None;
        self.clients.clear();
        self.client_count = None;
        debug!("session drained; new token issued");
        self.announce();
    }

    fn shutdown_all(&mut self) {
        let members: Vec<usize> = self.conns.lock().unwrap_or_else(|p| p.into_inner()).keys().copied().collect();
        for m in members {
            if !matches!(self.peers.get(&m), None | Some(Peer::Pending) | Some(Peer::Query)) {
                self.send(m, &Message::Shutdown);
            }
            self.finish(m);
        }
    }
}
