// SPDX-License-Identifier: Apache-2.0

//! Benchmark harness: replay one image as a stream of frames through a
//! loopback wall and report frame rate and byte counts.
//!
//! Frame times are taken at the coordinator when frames complete (which is
//! when the next tokens are issued), so both modes are measured at the same
//! point. Byte counts come from service-side counters.

use std::io::Write;
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use dw2_core::config::DisplayEntry;
use dw2_core::{Endpoint, Mode, PixelBuffer, Rect, WallConfig};
use log::info;
use serde::Serialize;

use crate::client::{query_info_timeout, ClientError, ClientOptions, ClientSession};
use crate::codec::Quality;
use crate::images::{ImageLoadError, ImageSource};
use crate::service::{LocalWall, LocalWallOptions, ServiceError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Image(#[from] ImageLoadError),
    #[error("image is {got_w}x{got_h}, the wall is {want_w}x{want_h}")]
    ImageSize { got_w: u32, got_h: u32, want_w: u32, want_h: u32 },
    #[error("bad sweep axis '{0}'")]
    Axis(String),
    #[error("{0}")]
    Run(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One row of the report; field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub mode: String,
    pub tile_size: u32,
    pub quality: String,
    pub clients: u32,
    pub displays: u32,
    pub frames: u32,
    pub mean_fps: f64,
    pub p5_frame_ms: f64,
    pub p95_frame_ms: f64,
    pub payload_bytes_per_frame: f64,
    pub head_node_bytes_per_frame: f64,
}

#[derive(Clone, Debug)]
pub struct ReplayParams {
    pub tile_size: u32,
    pub quality: Quality,
    pub peers: u32,
    pub frames: u32,
    /// Compression workers per peer; 0 picks the client default.
    pub compression_threads: usize,
    /// Upper bound for any single wait on the wall.
    pub timeout: Duration,
}

impl Default for ReplayParams {
    fn default() -> Self {
        ReplayParams {
            tile_size: 64,
            quality: Quality::Jpeg(75),
            peers: 1,
            frames: 20,
            compression_threads: 0,
            timeout: Duration::from_secs(60),
        }
    }
}

/// Tiles of a `tile` grid over `width` x `height` owned by peer `rank`,
/// dealt round-robin in row-major order. Edge tiles are clipped.
pub fn tiles_for_peer(width: u32, height: u32, tile: u32, peers: u32, rank: u32) -> Vec<Rect> {
    let tile = tile.max(1);
    let mut out = Vec::new();
    let mut i = 0u32;
    for y in (0..height).step_by(tile as usize) {
        for x in (0..width).step_by(tile as usize) {
            if i % peers.max(1) == rank {
                out.push(Rect::new(x, y, tile.min(width - x), tile.min(height - y)));
            }
            i += 1;
        }
    }
    out
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

fn run_peer(
    coordinator: &Endpoint,
    image: &PixelBuffer,
    params: &ReplayParams,
    rank: u32,
) -> Result<(), ClientError> {
    let info = query_info_timeout(coordinator, params.timeout)?;
    let tiles: Vec<(Rect, PixelBuffer)> =
        tiles_for_peer(info.virtual_width, info.virtual_height, params.tile_size, params.peers, rank)
            .into_iter()
            .map(|r| (r, image.crop(&r).expect("tile inside image")))
            .collect();
    let mut options = ClientOptions {
        quality: params.quality,
        handshake_timeout: params.timeout,
        ..Default::default()
    };
    if params.compression_threads > 0 {
        options.compression_threads = params.compression_threads;
    }
    let mut session = ClientSession::connect(&info, rank, params.peers, options)?;
    let mut last = None;
    for _ in 0..params.frames {
        let frame = session
            .begin_frame_timeout(params.timeout)?
            .ok_or_else(|| ClientError::SessionClosed("timed out waiting for a frame token".into()))?;
        for (rect, px) in &tiles {
            session.send_rgba(frame, px.clone(), rect.x, rect.y)?;
        }
        last = Some(frame);
    }
    if let Some(f) = last {
        if !session.wait_frame_complete(f, params.timeout)? {
            return Err(ClientError::SessionClosed(format!("frame {f} did not complete")));
        }
    }
    session.disconnect()?;
    Ok(())
}

/// Streams `params.frames` copies of `image` through a running wall with
/// `params.peers` client threads.
pub fn run_replay(wall: &LocalWall, image: &PixelBuffer, params: &ReplayParams) -> Result<BenchRecord, BenchError> {
    let (w, h) = wall.config().virtual_size();
    if (image.width(), image.height()) != (w, h) {
        return Err(BenchError::ImageSize {
            got_w: image.width(),
            got_h: image.height(),
            want_w: w,
            want_h: h,
        });
    }
    let before = wall.stats();
    let coordinator = wall.coordinator().clone();
    let results: Vec<Result<(), ClientError>> = thread::scope(|s| {
        let handles: Vec<_> = (0..params.peers.max(1))
            .map(|rank| {
                let coordinator = &coordinator;
                s.spawn(move || run_peer(coordinator, image, params, rank))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(ClientError::SessionClosed("peer panicked".into()))))
            .collect()
    });
    for r in results {
        r?;
    }
    let after = wall.stats();
    let session = after
        .sessions
        .get(before.sessions.len())
        .ok_or_else(|| BenchError::Run("the coordinator recorded no session".into()))?;
    let frames = session.frames() as u32;
    if frames < params.frames {
        return Err(BenchError::Run(format!("only {frames} of {} frames completed", params.frames)));
    }
    let intervals: Vec<f64> = session.frame_intervals().iter().map(|d| d.as_secs_f64() * 1e3).collect();
    let per_frame = |a: u64, b: u64| (a - b) as f64 / frames as f64;
    Ok(BenchRecord {
        mode: wall.config().mode.as_str().into(),
        tile_size: params.tile_size,
        quality: params.quality.to_string(),
        clients: params.peers.max(1),
        displays: wall.config().display_count() as u32,
        frames,
        mean_fps: session.fps().unwrap_or(0.0),
        p5_frame_ms: percentile(&intervals, 5.0),
        p95_frame_ms: percentile(&intervals, 95.0),
        payload_bytes_per_frame: per_frame(after.display_payload(), before.display_payload()),
        head_node_bytes_per_frame: per_frame(after.head_node_bytes(), before.head_node_bytes()),
    })
}

/// Declared sweep axes. Unset axes keep the single value of the base run.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub tile_sizes: Vec<u32>,
    pub qualities: Vec<Quality>,
    pub peers: Vec<u32>,
    pub modes: Vec<Mode>,
    /// Display grids as (columns, rows); empty keeps the configured grid.
    pub displays: Vec<(u32, u32)>,
    pub frames: u32,
    pub repeat: u32,
}

impl SweepSpec {
    /// A one-point sweep around a base run.
    pub fn single(mode: Mode, params: &ReplayParams) -> SweepSpec {
        SweepSpec {
            tile_sizes: vec![params.tile_size],
            qualities: vec![params.quality],
            peers: vec![params.peers],
            modes: vec![mode],
            displays: Vec::new(),
            frames: params.frames,
            repeat: 1,
        }
    }

    /// Applies one `axis=v1,v2,...` declaration. Axes: `tile_size`,
    /// `quality`, `peers` (alias `clients`), `mode`, `displays` (`CxR` or a
    /// column count).
    pub fn set_axis(&mut self, decl: &str) -> Result<(), BenchError> {
        let bad = || BenchError::Axis(decl.to_string());
        let (axis, list) = decl.split_once('=').ok_or_else(bad)?;
        let items: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if items.is_empty() {
            return Err(bad());
        }
        fn all<T: FromStr>(items: &[&str]) -> Option<Vec<T>> {
            items.iter().map(|s| s.parse().ok()).collect()
        }
        match axis.trim() {
            "tile_size" | "tile" => self.tile_sizes = all(&items).filter(|v: &Vec<u32>| v.iter().all(|&t| t > 0)).ok_or_else(bad)?,
            "quality" => self.qualities = all(&items).ok_or_else(bad)?,
            "peers" | "clients" => self.peers = all(&items).filter(|v: &Vec<u32>| v.iter().all(|&p| p > 0)).ok_or_else(bad)?,
            "mode" => self.modes = all(&items).ok_or_else(bad)?,
            "displays" => {
                self.displays = items
                    .iter()
                    .map(|s| match s.split_once(['x', 'X']) {
                        Some((c, r)) => Some((c.parse().ok()?, r.parse().ok()?)),
                        None => Some((s.parse().ok()?, 1)),
                    })
                    .collect::<Option<Vec<(u32, u32)>>>()
                    .filter(|v| v.iter().all(|&(c, r)| c > 0 && r > 0))
                    .ok_or_else(bad)?
            }
            _ => return Err(bad()),
        }
        Ok(())
    }
}

/// Same displays and ports layout, different grid and mode.
pub fn reshape(base: &WallConfig, columns: u32, rows: u32, mode: Mode) -> Result<WallConfig, BenchError> {
    let host = base.coordinator.host.clone();
    let entries = (0..rows)
        .flat_map(|row| (0..columns).map(move |col| (row, col)))
        .map(|(row, col)| DisplayEntry {
            row,
            col,
            endpoint: Endpoint::new(host.clone(), 0),
        })
        .collect();
    let mut geometry = base.geometry;
    geometry.columns = columns;
    geometry.rows = rows;
    // ports are rebound on loopback; give each display a distinct placeholder
    let mut cfg = WallConfig::new(
        geometry,
        entries,
        base.frames_in_flight,
        mode,
        Endpoint::new(host.clone(), 1),
        Some(Endpoint::new(host, 2)),
    )
    .map_err(|e| BenchError::Run(e.to_string()))?;
    for (i, d) in cfg.displays.iter_mut().enumerate() {
        d.endpoint.port = 3 + i as u16;
    }
    Ok(cfg)
}

fn aggregate(runs: &[BenchRecord]) -> BenchRecord {
    let pick = |f: fn(&BenchRecord) -> f64| median(&runs.iter().map(f).collect::<Vec<_>>());
    BenchRecord {
        mean_fps: pick(|r| r.mean_fps),
        p5_frame_ms: pick(|r| r.p5_frame_ms),
        p95_frame_ms: pick(|r| r.p95_frame_ms),
        payload_bytes_per_frame: pick(|r| r.payload_bytes_per_frame),
        head_node_bytes_per_frame: pick(|r| r.head_node_bytes_per_frame),
        ..runs[0].clone()
    }
}

/// Runs the cartesian product of the sweep axes on fresh loopback walls
/// and returns one record per point, the median of `repeat` runs.
pub fn sweep(
    base: &WallConfig,
    image: &ImageSource,
    spec: &SweepSpec,
    wall_options: &LocalWallOptions,
    params: &ReplayParams,
) -> Result<Vec<BenchRecord>, BenchError> {
    let grids = if spec.displays.is_empty() {
        vec![(base.geometry.columns, base.geometry.rows)]
    } else {
        spec.displays.clone()
    };
    let mut out = Vec::new();
    for &mode in &spec.modes {
        for &(columns, rows) in &grids {
            let cfg = if (columns, rows) == (base.geometry.columns, base.geometry.rows) {
                let mut c = base.clone();
                c.mode = mode;
                c
            } else {
                reshape(base, columns, rows, mode)?
            };
            let (w, h) = cfg.virtual_size();
            // one picture for every point, so tile size is the only variable
            let block = spec.tile_sizes.iter().copied().min().unwrap_or(64);
            let picture = image.render(w, h, block)?;
            for &tile in &spec.tile_sizes {
                for &quality in &spec.qualities {
                    for &peers in &spec.peers {
                        let p = ReplayParams {
                            tile_size: tile,
                            quality,
                            peers,
                            frames: spec.frames,
                            ..params.clone()
                        };
                        let mut runs = Vec::new();
                        for _ in 0..spec.repeat.max(1) {
                            let wall = LocalWall::start(&cfg, wall_options.clone())?;
                            let r = run_replay(&wall, &picture, &p);
                            wall.shutdown()?;
                            runs.push(r?);
                        }
                        let rec = aggregate(&runs);
                        info!(
                            "{} tile {} q {} clients {} displays {}: {:.1} fps, {:.0} payload B/frame",
                            rec.mode, rec.tile_size, rec.quality, rec.clients, rec.displays, rec.mean_fps, rec.payload_bytes_per_frame
                        );
                        out.push(rec);
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn write_csv(records: &[BenchRecord], out: impl Write) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
