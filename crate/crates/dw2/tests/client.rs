// SPDX-License-Identifier: Apache-2.0

mod common;

use common::{connect, small_wall, start, T};
use dw2::client::{query_info, query_info_timeout, ClientError, ClientOptions, ClientSession};
use dw2::codec::Quality;
use dw2::config::{parse_config, to_json};
use dw2::images::generate_synthetic;
use dw2::service::SinkSpec;
use dw2::{Mode, PixelBuffer, Rect, WallConfig};

#[test]
fn query_info_direct_lists_displays() {
    let wall = start(&small_wall(Mode::Direct, 2), SinkSpec::Null);
    let ep = wall.coordinator().clone();
    let info = query_info(&ep.host, ep.port).unwrap();
    assert_eq!((info.virtual_width, info.virtual_height), (640, 480));
    assert_eq!(info.mode, Mode::Direct);
    assert_eq!(info.frames_in_flight, 2);
    assert!(info.dispatcher.is_none());
    assert_eq!(info.displays.len(), 4);
    for (i, d) in info.displays.iter().enumerate() {
        assert_eq!(d.display_id as usize, i);
        assert_eq!(d.region, wall.config().display_region(i).unwrap());
    }
    wall.shutdown().unwrap();
}

#[test]
fn query_info_dispatcher_names_the_dispatcher() {
    let wall = start(&small_wall(Mode::Dispatcher, 3), SinkSpec::Null);
    let info = query_info_timeout(wall.coordinator(), T).unwrap();
    assert_eq!(info.mode, Mode::Dispatcher);
    assert_eq!(info.frames_in_flight, 3);
    assert_eq!(info.dispatcher.as_ref(), Some(&wall.config().dispatcher));
    assert!(info.displays.is_empty());
    wall.shutdown().unwrap();
}

#[test]
fn unreachable_coordinator() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = query_info("127.0.0.1", port).unwrap_err();
    assert!(matches!(err, ClientError::Unreachable { .. }), "{err}");
}

#[test]
fn invalid_rank_is_refused_locally() {
    let wall = start(&small_wall(Mode::Direct, 2), SinkSpec::Null);
    let info = query_info_timeout(wall.coordinator(), T).unwrap();
    let Err(err) = ClientSession::connect(&info, 2, 2, ClientOptions::default()) else {
        panic!("rank 2 of 2 accepted");
    };
    assert!(matches!(err, ClientError::InvalidArgument(_)), "{err}");
    wall.shutdown().unwrap();
}

#[test]
fn frame_and_bounds_errors() {
    let wall = start(&small_wall(Mode::Direct, 1), SinkSpec::Null);
    let mut s = connect(&wall, 0, 1, Quality::Raw);
    let tile = || PixelBuffer::filled(16, 16, [9, 9, 9, 255]);
    // nothing begun yet
    assert!(matches!(s.send_rgba(0, tile(), 0, 0), Err(ClientError::NotAdmitted(0))));
    let f = s.begin_frame_timeout(T).unwrap().unwrap();
    assert_eq!(f, 0);
    assert!(matches!(s.send_rgba(1, tile(), 0, 0), Err(ClientError::NotAdmitted(1))));
    assert!(matches!(s.send_rgba(f, tile(), 630, 0), Err(ClientError::OutOfBounds { .. })));
    assert!(matches!(
        s.send_rgba(f, PixelBuffer::zeroed(0, 0), 0, 0),
        Err(ClientError::InvalidArgument(_))
    ));
    // one frame in flight: the next is held back until this one completes
    assert_eq!(s.begin_frame_timeout(std::time::Duration::from_millis(300)).unwrap(), None);
    s.send_rgba(f, PixelBuffer::filled(640, 480, [1, 2, 3, 255]), 0, 0).unwrap();
    assert!(s.wait_frame_complete(f, T).unwrap());
    assert!(matches!(s.send_rgba(f, tile(), 0, 0), Err(ClientError::NotAdmitted(0))));
    assert_eq!(s.begin_frame_timeout(T).unwrap(), Some(1));
    s.disconnect().unwrap();
    wall.shutdown().unwrap();
}

/// 2x2 wall of 320x240 with 16-pixel bezels on both axes.
fn bezel_wall(mode: Mode) -> WallConfig {
    let json = to_json(&small_wall(mode, 2))
        .replace("\"bezel_x\": 0", "\"bezel_x\": 16")
        .replace("\"bezel_y\": 0", "\"bezel_y\": 16");
    parse_config(&json).unwrap()
}

fn bezel_tiles(mode: Mode) {
    let cfg = bezel_wall(mode);
    assert_eq!(cfg.virtual_size(), (656, 496));
    let image = generate_synthetic(656, 496, 32, 3);
    let wall = start(&cfg, SinkSpec::Null);
    let mut s = connect(&wall, 0, 1, Quality::Jpeg(80));
    let f = s.begin_frame_timeout(T).unwrap().unwrap();
    // entirely inside the vertical and the horizontal gap
    for r in [Rect::new(320, 0, 16, 100), Rect::new(0, 240, 656, 16)] {
        s.send_rgba(f, image.crop(&r).unwrap(), r.x, r.y).unwrap();
    }
    // straddles all four displays and the gap cross
    let centre = Rect::new(300, 220, 56, 56);
    s.send_rgba(f, image.crop(&centre).unwrap(), centre.x, centre.y).unwrap();
    for d in 0..4 {
        let r = cfg.display_region(d).unwrap();
        s.send_rgba(f, image.crop(&r).unwrap(), r.x, r.y).unwrap();
    }
    assert!(s.wait_frame_complete(f, T).unwrap());
    let stats = s.disconnect().unwrap();
    let wall_stats = wall.stats();
    match mode {
        Mode::Direct => {
            assert_eq!(stats.bezel_tiles, 2);
            // centre tile to 4 displays, full tiles to one each
            assert_eq!(stats.tile_messages, 8);
        }
        Mode::Dispatcher => {
            let d = wall_stats.dispatcher.unwrap();
            assert_eq!(d.dropped_tiles, 2);
            assert_eq!(d.tiles_in, 7);
            assert_eq!(d.tiles_out, 8);
        }
    }
    let delivered: u64 = wall_stats.displays.iter().map(|d| d.tiles).sum();
    assert_eq!(delivered, 8);
    wall.shutdown().unwrap();
}

#[test]
fn bezel_tiles_direct() {
    bezel_tiles(Mode::Direct);
}

#[test]
fn bezel_tiles_dispatcher() {
    bezel_tiles(Mode::Dispatcher);
}

#[test]
fn two_clients_share_a_frame() {
    let cfg = small_wall(Mode::Direct, 2);
    let image = generate_synthetic(640, 480, 64, 11);
    let wall = start(&cfg, SinkSpec::Null);
    std::thread::scope(|scope| {
        for rank in 0..2 {
            let (wall, image) = (&wall, &image);
            scope.spawn(move || {
                let mut s = connect(wall, rank, 2, Quality::Raw);
                for _ in 0..3 {
                    let f = s.begin_frame_timeout(T).unwrap().unwrap();
                    // left and right halves
                    let r = Rect::new(rank * 320, 0, 320, 480);
                    s.send_rgba(f, image.crop(&r).unwrap(), r.x, r.y).unwrap();
                }
                assert!(s.wait_frame_complete(2, T).unwrap());
                s.disconnect().unwrap();
            });
        }
    });
    let session = wall.stats().sessions.pop().unwrap();
    assert_eq!(session.clients, 2);
    assert_eq!(session.frames(), 3);
    wall.shutdown().unwrap();
}
