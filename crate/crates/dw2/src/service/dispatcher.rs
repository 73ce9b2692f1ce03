// SPDX-License-Identifier: Apache-2.0

//! Dispatcher: routes client tiles to displays by header alone. Payloads
//! are forwarded untouched and never decompressed. A tile spanning several
//! displays is encoded once and the same frame is queued on each.

use std::net::TcpListener;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;

use dw2_core::{protocol, Endpoint, Message, Role, WallConfig};
use log::{debug, info, warn};

use super::{ControlEvent, ControlLink, ServiceError, StopSignal, POLL};
use crate::socket_group::{
    accept_group, connect_group, Delivery, ExpectedPeers, GroupError, GroupOptions, SocketGroup, Traffic,
    TrafficSnapshot,
};

#[derive(Debug, Default)]
pub struct DispatcherStats {
    pub tiles_in: AtomicU64,
    pub tiles_out: AtomicU64,
    pub payload_in: AtomicU64,
    pub payload_out: AtomicU64,
    /// Tiles that overlap no display (bezel-only).
    pub dropped_tiles: AtomicU64,
    pub malformed_tiles: AtomicU64,
    /// Client-facing and display-facing data traffic.
    pub traffic: Arc<Traffic>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DispatcherSnapshot {
    pub tiles_in: u64,
    pub tiles_out: u64,
    pub payload_in: u64,
    pub payload_out: u64,
    pub dropped_tiles: u64,
    pub malformed_tiles: u64,
    pub traffic: TrafficSnapshot,
}

impl DispatcherStats {
    pub fn snapshot(&self) -> DispatcherSnapshot {
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        DispatcherSnapshot {
            tiles_in: l(&self.tiles_in),
            tiles_out: l(&self.tiles_out),
            payload_in: l(&self.payload_in),
            payload_out: l(&self.payload_out),
            dropped_tiles: l(&self.dropped_tiles),
            malformed_tiles: l(&self.malformed_tiles),
            traffic: self.traffic.snapshot(),
        }
    }
}

fn bump(a: &AtomicU64, n: u64) {
    a.fetch_add(n, Ordering::Relaxed);
}

pub fn run_dispatcher(
    config: &WallConfig,
    listener: TcpListener,
    stop: StopSignal,
    stats: Arc<DispatcherStats>,
) -> Result<(), ServiceError> {
    let control = ControlLink::join(config, Role::Dispatcher, 0, Arc::default())?;
    let endpoints: Vec<Endpoint> = config.displays.iter().map(|d| d.endpoint.clone()).collect();
    let options = GroupOptions {
        retry_refused: true,
        first_peer_timeout: None,
        traffic: stats.traffic.clone(),
        ..Default::default()
    };
    info!("dispatcher up: forwarding to {} display(s)", endpoints.len());
    let mut pending = None;
    let result = loop {
        let token = match pending.take() {
            Some(t) => t,
            None => match control.wait_token(&stop) {
                Ok(Some(t)) => t,
                Ok(None) => break Ok(()),
                Err(e) => break Err(e),
            },
        };
        let displays = match connect_group(&endpoints, token, 0, 1, &options) {
            Ok(g) => g,
            Err(e) => {
                warn!("dispatcher: cannot reach the displays: {e}");
                continue;
            }
        };
        let cancel = || stop.is_stopped() || control.has_pending();
        let clients = match accept_group(&listener, token, ExpectedPeers::FromHandshake, &options, &cancel) {
            Ok(g) => g,
            Err(GroupError::Cancelled) => continue,
            Err(e) => {
                warn!("dispatcher: client group failed: {e}");
                let _ = displays.finish();
                continue;
            }
        };
        debug!("dispatcher: session with {} client(s)", clients.len());
        match forward_session(config, clients, &displays, &stats, &control, &stop) {
            Ok(t) => pending = t,
            Err(e) => break Err(e),
        }
        if let Err(e) = displays.finish() {
            warn!("dispatcher: {e}");
        }
        if stop.is_stopped() {
            break Ok(());
        }
    };
    control.close();
    result
}

/// Forwards until every client hung up. Returns a token that arrived
/// meanwhile, if any.
fn forward_session(
    config: &WallConfig,
    mut clients: SocketGroup,
    displays: &SocketGroup,
    stats: &DispatcherStats,
    control: &ControlLink,
    stop: &StopSignal,
) -> Result<Option<u64>, ServiceError> {
    let inbox = clients.incoming();
    let mut pending = None;
    let mut error = None;
    thread::scope(|s| {
        let forwarder = s.spawn(|| {
            while let Some((_, env)) = inbox.pop_any() {
                let Delivery::Message(Message::Tile { header, payload }) = env.delivery else {
                    continue;
                };
                bump(&stats.tiles_in, 1);
                bump(&stats.payload_in, payload.len() as u64);
                let targets = match config.route_rect(&header.rect()) {
                    Ok(t) => t,
                    Err(e) => {
                        warn!("dispatcher: tile {}: {e}", header.rect());
                        bump(&stats.malformed_tiles, 1);
                        continue;
                    }
                };
                if targets.is_empty() {
                    bump(&stats.dropped_tiles, 1);
                    continue;
                }
                let len = payload.len() as u64;
                let frame = match protocol::encode(&Message::Tile { header, payload }) {
                    Ok(f) => Arc::new(f),
                    Err(e) => {
                        warn!("dispatcher: {e}");
                        bump(&stats.malformed_tiles, 1);
                        continue;
                    }
                };
                for (display, _) in targets {
                    if let Err(e) = displays.send_frame_to(display, frame.clone()) {
                        warn!("dispatcher: display {display}: {e}; aborting the session");
                        inbox.close();
                        return;
                    }
                    bump(&stats.tiles_out, 1);
                    bump(&stats.payload_out, len);
                }
            }
        });
        while !forwarder.is_finished() {
            if stop.is_stopped() {
                inbox.close();
            }
            match control.next(POLL) {
                Some(ControlEvent::Token(t)) => pending = Some(t),
                Some(ControlEvent::Shutdown) => {
                    stop.stop();
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
    clients.close();
    match error {
        Some(e) => Err(e),
        None => Ok(pending),
    }
}
