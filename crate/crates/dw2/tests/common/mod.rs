// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::time::Duration;

use dw2::bench::tiles_for_peer;
use dw2::client::{query_info_timeout, ClientOptions, ClientSession};
use dw2::codec::Quality;
use dw2::config::grid_config;
use dw2::service::sink::FrameStore;
use dw2::service::{LocalWall, LocalWallOptions, SinkSpec};
use dw2::{Mode, PixelBuffer, WallConfig};

pub const T: Duration = Duration::from_secs(20);

pub fn small_wall(mode: Mode, fif: u32) -> WallConfig {
    grid_config(2, 2, 320, 240, mode, fif, "127.0.0.1", 7000).unwrap()
}

pub fn start(config: &WallConfig, sink: SinkSpec) -> LocalWall {
    LocalWall::start(
        config,
        LocalWallOptions {
            sink,
            decomp_threads: 2,
            ephemeral_ports: true,
        },
    )
    .unwrap()
}

pub fn memory_wall(config: &WallConfig) -> (LocalWall, FrameStore) {
    let store = FrameStore::default();
    (start(config, SinkSpec::Memory(store.clone())), store)
}

pub fn connect(wall: &LocalWall, rank: u32, count: u32, quality: Quality) -> ClientSession {
    let info = query_info_timeout(wall.coordinator(), T).unwrap();
    let options = ClientOptions {
        quality,
        compression_threads: 2,
        ..Default::default()
    };
    ClientSession::connect(&info, rank, count, options).unwrap()
}

/// Sends `frames` frames of `image` in `tile`-sized tiles with one client.
pub fn stream(wall: &LocalWall, image: &PixelBuffer, tile: u32, quality: Quality, frames: u32) {
    let mut s = connect(wall, 0, 1, quality);
    let (w, h) = (image.width(), image.height());
    for _ in 0..frames {
        let f = s.begin_frame_timeout(T).unwrap().expect("frame admitted");
        for r in tiles_for_peer(w, h, tile, 1, 0) {
            s.send_rgba(f, image.crop(&r).unwrap(), r.x, r.y).unwrap();
        }
    }
    assert!(s.wait_frame_complete(frames - 1, T).unwrap());
    s.disconnect().unwrap();
}
