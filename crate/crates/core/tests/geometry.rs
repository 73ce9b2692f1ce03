// SPDX-License-Identifier: Apache-2.0

use dw2_core::geometry::*;

fn wall(cols: u32, rows: u32, w: u32, h: u32, bx: u32, by: u32) -> WallGeometry {
    WallGeometry {
        columns: cols,
        rows,
        display_width: w,
        display_height: h,
        bezel_x: bx,
        bezel_y: by,
    }
}

#[test]
fn virtual_size_of_reference_walls() {
    assert_eq!(wall(9, 4, 2560, 1440, 0, 0).virtual_size(), (23040, 5760));
    assert_eq!(wall(3, 3, 3840, 2160, 0, 0).virtual_size(), (11520, 6480));
    assert_eq!(wall(2, 2, 320, 240, 16, 8).virtual_size(), (656, 488));
}

#[test]
fn display_regions() {
    let w = wall(2, 2, 320, 240, 0, 0);
    assert_eq!(w.display_region(1).unwrap(), Rect::new(320, 0, 320, 240));
    let w = wall(2, 2, 320, 240, 16, 8);
    assert_eq!(w.display_region(3).unwrap(), Rect::new(336, 248, 320, 240));
    let w = wall(1, 1, 64, 48, 5, 5);
    assert_eq!(w.display_region(0).unwrap(), Rect::new(0, 0, 64, 48));
    assert_eq!(
        w.display_region(1),
        Err(GeometryError::DisplayOutOfRange { id: 1, count: 1 })
    );
}

#[test]
fn route_across_vertical_seam() {
    let w = wall(2, 2, 320, 240, 0, 0);
    let routed = w.route_rect(&Rect::new(300, 0, 64, 64)).unwrap();
    assert_eq!(
        routed,
        [(0, Rect::new(300, 0, 20, 64)), (1, Rect::new(320, 0, 44, 64))]
    );
    let routed = w.route_rect(&Rect::new(0, 0, 64, 64)).unwrap();
    assert_eq!(routed, [(0, Rect::new(0, 0, 64, 64))]);
}

#[test]
fn route_inside_bezel_is_empty() {
    let w = wall(2, 2, 320, 240, 16, 8);
    assert!(w.route_rect(&Rect::new(320, 0, 16, 64)).unwrap().is_empty());
    // horizontal strip
    assert!(w.route_rect(&Rect::new(0, 240, 656, 8)).unwrap().is_empty());
}

#[test]
fn route_rejects_out_of_bounds() {
    let w = wall(2, 2, 320, 240, 0, 0);
    assert!(matches!(
        w.route_rect(&Rect::new(600, 0, 64, 64)),
        Err(GeometryError::OutOfBounds { .. })
    ));
    assert!(matches!(
        w.route_rect(&Rect::new(0, 0, 0, 4)),
        Err(GeometryError::EmptyRect(_))
    ));
    assert!(w.route_rect(&Rect::new(u32::MAX, 0, 2, 2)).is_err());
}

#[test]
fn intersect_edges() {
    let a = Rect::new(0, 0, 10, 10);
    assert_eq!(a.intersect(&Rect::new(10, 0, 5, 5)), None);
    assert_eq!(a.intersect(&Rect::new(9, 9, 5, 5)), Some(Rect::new(9, 9, 1, 1)));
}
