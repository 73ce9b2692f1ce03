// SPDX-License-Identifier: Apache-2.0

mod common;

use common::*;
use dw2::codec::Quality;
use dw2::images::generate_synthetic;
use dw2::Mode;

fn lossless(mode: Mode) {
    let cfg = small_wall(mode, 2);
    let (wall, store) = memory_wall(&cfg);
    let image = generate_synthetic(640, 480, 64, 1);
    stream(&wall, &image, 64, Quality::Raw, 3);
    let cfg = wall.config().clone();
    wall.shutdown().unwrap();
    let frames = store.lock().unwrap();
    assert_eq!(frames.len(), 12);
    for ((d, _), px) in frames.iter() {
        let region = cfg.display_region(*d).unwrap();
        assert_eq!(px, &image.crop(&region).unwrap(), "display {d}");
    }
}

#[test]
fn lossless_direct() {
    lossless(Mode::Direct);
}

#[test]
fn lossless_dispatcher() {
    lossless(Mode::Dispatcher);
}
