// SPDX-License-Identifier: Apache-2.0

use dw2::bench::{median, percentile, reshape, tiles_for_peer, write_csv, BenchRecord, SweepSpec, ReplayParams};
use dw2::codec::{compress, Quality};
use dw2::config::grid_config;
use dw2::images::{generate_photographic, generate_synthetic, ImageSource, DEFAULT_SEED};
use dw2::{Mode, PixelBuffer, Rect};

fn frame_bytes(image: &PixelBuffer, tile: u32) -> usize {
    tiles_for_peer(image.width(), image.height(), tile, 1, 0)
        .iter()
        .map(|r| compress(&image.crop(r).unwrap(), Quality::Jpeg(75)).unwrap().1.len())
        .sum()
}

#[test]
fn generators_are_deterministic() {
    assert_eq!(generate_synthetic(200, 100, 32, 5), generate_synthetic(200, 100, 32, 5));
    assert_ne!(generate_synthetic(200, 100, 32, 5), generate_synthetic(200, 100, 32, 6));
    assert_eq!(generate_photographic(200, 100, 5), generate_photographic(200, 100, 5));
}

#[test]
fn synthetic_is_hard_to_compress() {
    let synthetic = generate_synthetic(640, 480, 64, DEFAULT_SEED);
    let flat = PixelBuffer::filled(640, 480, [90, 120, 200, 255]);
    let photo = generate_photographic(640, 480, DEFAULT_SEED);
    // whole-frame encodes, so per-tile headers do not dilute the ratio
    let (s, f) = (frame_bytes(&synthetic, 640), frame_bytes(&flat, 640));
    assert!(s >= 4 * f, "synthetic {s} vs constant {f}");
    let (s, p) = (frame_bytes(&synthetic, 64), frame_bytes(&photo, 64));
    assert!(s > p, "synthetic {s} vs photographic {p}");
}

#[test]
fn tiles_partition_the_frame() {
    let (w, h) = (650, 470);
    for peers in 1..=4 {
        let mut area = 0u64;
        let mut all: Vec<Rect> = Vec::new();
        for rank in 0..peers {
            for r in tiles_for_peer(w, h, 64, peers, rank) {
                assert!(r.right() <= w as u64 && r.bottom() <= h as u64);
                area += r.area();
                all.push(r);
            }
        }
        assert_eq!(area, w as u64 * h as u64);
        for (i, a) in all.iter().enumerate() {
            assert!(all[i + 1..].iter().all(|b| a.intersect(b).is_none()));
        }
    }
}

#[test]
fn statistics() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    // nearest rank: the lower middle value
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.0);
    let v: Vec<f64> = (1..=100).map(f64::from).collect();
    assert!((percentile(&v, 95.0) - 95.0).abs() <= 1.0);
    assert!((percentile(&v, 5.0) - 5.0).abs() <= 1.0);
}

#[test]
fn sweep_axes() {
    let mut spec = SweepSpec::single(Mode::Direct, &ReplayParams::default());
    spec.set_axis("tile_size=32,256").unwrap();
    spec.set_axis("quality=raw,90").unwrap();
    spec.set_axis("clients=1,4").unwrap();
    spec.set_axis("mode=direct,dispatcher").unwrap();
    spec.set_axis("displays=2x2,3").unwrap();
    assert_eq!(spec.tile_sizes, [32, 256]);
    assert_eq!(spec.qualities, [Quality::Raw, Quality::Jpeg(90)]);
    assert_eq!(spec.peers, [1, 4]);
    assert_eq!(spec.modes, [Mode::Direct, Mode::Dispatcher]);
    assert_eq!(spec.displays, [(2, 2), (3, 1)]);
    assert!(spec.set_axis("colour=red").is_err());
    assert!(spec.set_axis("tile_size=").is_err());
}

#[test]
fn reshape_keeps_display_size() {
    let base = grid_config(2, 2, 320, 240, Mode::Direct, 2, "127.0.0.1", 7000).unwrap();
    let c = reshape(&base, 4, 1, Mode::Dispatcher).unwrap();
    assert_eq!(c.virtual_size(), (1280, 240));
    assert_eq!(c.mode, Mode::Dispatcher);
    assert_eq!(c.display_count(), 4);
}

#[test]
fn csv_columns() {
    let r = BenchRecord {
        mode: "direct".into(),
        tile_size: 64,
        quality: "75".into(),
        clients: 1,
        displays: 4,
        frames: 10,
        mean_fps: 30.5,
        p5_frame_ms: 30.0,
        p95_frame_ms: 35.0,
        payload_bytes_per_frame: 1000.0,
        head_node_bytes_per_frame: 90.0,
    };
    let mut out = Vec::new();
    write_csv(&[r], &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "mode,tile_size,quality,clients,displays,frames,mean_fps,p5_frame_ms,p95_frame_ms,payload_bytes_per_frame,head_node_bytes_per_frame"
    );
    assert_eq!(lines.next().unwrap(), "direct,64,75,1,4,10,30.5,30.0,35.0,1000.0,90.0");
}

#[test]
fn image_source_names() {
    assert_eq!("synthetic".parse::<ImageSource>().unwrap(), ImageSource::Synthetic { seed: DEFAULT_SEED });
    assert_eq!("photo:7".parse::<ImageSource>().unwrap(), ImageSource::Photographic { seed: 7 });
    assert!(matches!("pic.png".parse::<ImageSource>().unwrap(), ImageSource::File(_)));
}
