// SPDX-License-Identifier: Apache-2.0

use dw2_core::coverage::*;
use dw2_core::protocol::Codec;
use dw2_core::*;

fn header(frame_id: u32, rect: Rect) -> TileHeader {
    TileHeader {
        frame_id,
        x: rect.x,
        y: rect.y,
        width: rect.width,
        height: rect.height,
        codec: Codec::RawRgba8,
        payload_len: rect.width * rect.height * 4,
    }
}

#[test]
fn mark_counts_only_new_bits() {
    let mut m = CoverageMask::new(100, 3);
    assert_eq!(m.mark(&Rect::new(10, 0, 80, 2)), 160);
    assert_eq!(m.mark(&Rect::new(0, 0, 100, 3)), 140);
    assert!(m.is_complete());
    assert_eq!(m.count_bits(), m.covered());
    assert_eq!(m.mark(&Rect::new(5, 1, 7, 1)), 0);
}

#[test]
fn clips_tile_into_local_coordinates() {
    // display (0,1) of a 2x2 wall of 320x240
    let mut fb = DisplayFramebuffer::new(1, Rect::new(320, 0, 320, 240));
    let rect = Rect::new(300, 0, 64, 64);
    let mut tile = PixelBuffer::zeroed(64, 64);
    for (i, px) in tile.as_bytes_mut().chunks_mut(4).enumerate() {
        px.copy_from_slice(&[(i % 64) as u8, (i / 64) as u8, 7, 255]);
    }
    assert_eq!(fb.write_tile(&header(0, rect), &tile).unwrap(), 44 * 64);
    // local (0,0) is tile column 20
    assert_eq!(fb.pixels().pixel(0, 0), [20, 0, 7, 255]);
    assert_eq!(fb.pixels().pixel(43, 63), [63, 63, 7, 255]);
    assert_eq!(fb.pixels().pixel(44, 0), [0, 0, 0, 0]);
    assert!(fb.coverage().is_set(43, 63));
    assert!(!fb.coverage().is_set(44, 0));
}

#[test]
fn miss_is_a_no_op_and_wrong_frame_is_refused() {
    let mut fb = DisplayFramebuffer::new(0, Rect::new(0, 0, 16, 16));
    let t = PixelBuffer::zeroed(4, 4);
    assert_eq!(fb.write_tile(&header(0, Rect::new(16, 0, 4, 4)), &t).unwrap(), 0);
    assert!(matches!(
        fb.write_tile(&header(1, Rect::new(0, 0, 4, 4)), &t),
        Err(WriteError::WrongFrame { tile: 1, current: 0 })
    ));
    assert!(matches!(
        fb.write_tile(&header(0, Rect::new(0, 0, 4, 2)), &t),
        Err(WriteError::Extent { .. })
    ));
}

#[test]
fn duplicate_tile_is_idempotent() {
    let mut fb = DisplayFramebuffer::new(0, Rect::new(0, 0, 8, 8));
    let t = PixelBuffer::filled(8, 4, [1, 2, 3, 4]);
    assert_eq!(fb.write_tile(&header(0, Rect::new(0, 0, 8, 4)), &t).unwrap(), 32);
    assert_eq!(fb.write_tile(&header(0, Rect::new(0, 0, 8, 4)), &t).unwrap(), 0);
    assert!(!fb.is_complete());
    assert_eq!(fb.write_tile(&header(0, Rect::new(0, 4, 8, 4)), &t).unwrap(), 32);
    assert!(fb.is_complete());
    fb.begin_frame(1);
    assert_eq!(fb.coverage().covered(), 0);
    assert_eq!(fb.frame_id(), 1);
}
