// SPDX-License-Identifier: Apache-2.0

//! Every role of a wall as threads of one process, for desk-scale runs.

use std::net::TcpListener;
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use dw2_core::{Endpoint, Mode, WallConfig};
use log::error;

use super::coordinator::{run_coordinator, CoordinatorStats, SessionRecord};
use super::dispatcher::{run_dispatcher, DispatcherSnapshot, DispatcherStats};
use super::display::{default_decomp_threads, run_display, DisplayOptions, DisplaySnapshot, DisplayStats};
use super::sink::SinkSpec;
use super::{ServiceError, StopSignal};
use crate::socket_group::TrafficSnapshot;

#[derive(Clone, Debug)]
pub struct LocalWallOptions {
    pub sink: SinkSpec,
    pub decomp_threads: usize,
    /// Bind 127.0.0.1 on OS-chosen ports and rewrite the config to match,
    /// instead of binding the configured endpoints.
    pub ephemeral_ports: bool,
}

impl Default for LocalWallOptions {
    fn default() -> Self {
        LocalWallOptions {
            sink: SinkSpec::Null,
            decomp_threads: default_decomp_threads(),
            ephemeral_ports: true,
        }
    }
}

/// Binds a listener on an endpoint.
pub fn bind(endpoint: &Endpoint) -> Result<TcpListener, ServiceError> {
    Ok(TcpListener::bind((endpoint.host.as_str(), endpoint.port))?)
}

type RoleThread = JoinHandle<Result<(), ServiceError>>;

pub struct LocalWall {
    config: WallConfig,
    stop: StopSignal,
    roles: Vec<(String, RoleThread)>,
    coordinator: Arc<CoordinatorStats>,
    displays: Vec<Arc<DisplayStats>>,
    dispatcher: Option<Arc<DispatcherStats>>,
}

#[derive(Clone, Debug)]
pub struct WallStats {
    pub coordinator_traffic: TrafficSnapshot,
    pub sessions: Vec<SessionRecord>,
    pub displays: Vec<DisplaySnapshot>,
    pub dispatcher: Option<DispatcherSnapshot>,
}

impl WallStats {
    /// Payload bytes received by all displays.
    pub fn display_payload(&self) -> u64 {
        self.displays.iter().map(|d| d.payload_bytes).sum()
    }

    /// Bytes through the head node: coordinator control plus dispatcher data.
    pub fn head_node_bytes(&self) -> u64 {
        self.coordinator_traffic.total() + self.dispatcher.map_or(0, |d| d.traffic.total())
    }
}

impl LocalWall {
    pub fn start(config: &WallConfig, options: LocalWallOptions) -> Result<LocalWall, ServiceError> {
        let mut config = config.clone();
        let listen = |ep: &mut Endpoint| -> Result<TcpListener, ServiceError> {
            if options.ephemeral_ports {
                let l = TcpListener::bind("127.0.0.1:0")?;
                *ep = Endpoint::new("127.0.0.1", l.local_addr()?.port());
                Ok(l)
            } else {
                bind(ep)
            }
        };
        let coordinator_listener = listen(&mut config.coordinator)?;
        let dispatcher_listener = match config.mode {
            Mode::Dispatcher => Some(listen(&mut config.dispatcher)?),
            Mode::Direct => None,
        };
        let mut display_listeners = Vec::new();
        for d in &mut config.displays {
            display_listeners.push(listen(&mut d.endpoint)?);
        }
        let sinks = (0..config.display_count())
            .map(|_| options.sink.build())
            .collect::<Result<Vec<_>, _>>()?;

        let stop = StopSignal::new();
        let mut wall = LocalWall {
            config: config.clone(),
            stop: stop.clone(),
            roles: Vec::new(),
            coordinator: Arc::default(),
            displays: Vec::new(),
            dispatcher: None,
        };
        let shared = Arc::new(config);
        {
            let (cfg, stop, stats) = (shared.clone(), stop.clone(), wall.coordinator.clone());
            wall.spawn("coordinator", move || run_coordinator(&cfg, coordinator_listener, stop, stats))?;
        }
        for (id, (listener, sink)) in display_listeners.into_iter().zip(sinks).enumerate() {
            let stats = Arc::new(DisplayStats::default());
            wall.displays.push(stats.clone());
            let (cfg, stop) = (shared.clone(), stop.clone());
            let opts = DisplayOptions {
                decomp_threads: options.decomp_threads,
                ..Default::default()
            };
            wall.spawn(&format!("display-{id}"), move || run_display(&cfg, id, listener, sink, opts, stop, stats))?;
        }
        if let Some(listener) = dispatcher_listener {
            let stats = Arc::new(DispatcherStats::default());
            wall.dispatcher = Some(stats.clone());
            let (cfg, stop) = (shared.clone(), stop.clone());
            wall.spawn("dispatcher", move || run_dispatcher(&cfg, listener, stop, stats))?;
        }
        Ok(wall)
    }

    fn spawn(
        &mut self,
        name: &str,
        f: impl FnOnce() -> Result<(), ServiceError> + Send + 'static,
    ) -> Result<(), ServiceError> {
        let handle = thread::Builder::new().name(format!("dw2-{name}")).spawn(f)?;
        self.roles.push((name.to_string(), handle));
        Ok(())
    }

    /// The effective configuration, with the ports actually bound.
    pub fn config(&self) -> &WallConfig {
        &self.config
    }

    pub fn coordinator(&self) -> &Endpoint {
        &self.config.coordinator
    }

    pub fn display_stats(&self, display_id: usize) -> &Arc<DisplayStats> {
        &self.displays[display_id]
    }

    pub fn coordinator_stats(&self) -> &Arc<CoordinatorStats> {
        &self.coordinator
    }

    pub fn pause_display(&self, display_id: usize, paused: bool) {
        self.displays[display_id].set_paused(paused);
    }

    pub fn stats(&self) -> WallStats {
        WallStats {
            coordinator_traffic: self.coordinator.traffic(),
            sessions: self.coordinator.sessions(),
            displays: self.displays.iter().map(|d| d.snapshot()).collect(),
            dispatcher: self.dispatcher.as_ref().map(|d| d.snapshot()),
        }
    }

    /// True once any role thread has exited (normally only after shutdown).
    pub fn has_failed(&self) -> bool {
        self.roles.iter().any(|(_, h)| h.is_finished())
    }

    /// Stops every role and waits for them; sinks are flushed on return.
    /// Returns the first role error.
    pub fn shutdown(mut self) -> Result<(), ServiceError> {
        self.stop.stop();
        self.join_roles()
    }

    /// Waits for the roles to exit on their own, as a foreground service
    /// does. A role that fails takes the others down with it.
    pub fn wait(mut self) -> Result<(), ServiceError> {
        while !self.roles.iter().any(|(_, h)| h.is_finished()) {
            thread::sleep(super::POLL);
        }
        self.stop.stop();
        self.join_roles()
    }

    fn join_roles(&mut self) -> Result<(), ServiceError> {
        let mut first = None;
        for (name, handle) in self.roles.drain(..) {
            let err = match handle.join() {
                Ok(Ok(())) => continue,
                Ok(Err(e)) => e,
                Err(_) => ServiceError::Invalid(format!("{name} panicked")),
            };
            error!("{name}: {err}");
            first.get_or_insert(err);
        }
        first.map_or(Ok(()), Err)
    }
}

impl Drop for LocalWall {
    fn drop(&mut self) {
        self.stop.stop();
        for (_, h) in self.roles.drain(..) {
            let _ = h.join();
        }
    }
}
