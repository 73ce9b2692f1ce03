// SPDX-License-Identifier: Apache-2.0

//! Virtual framebuffer geometry and sort-first tile routing.
//!
//! The wall is a uniform grid of `columns x rows` displays. Bezel gaps are
//! part of the virtual framebuffer, so clients render one continuous image
//! and routing simply discards whatever falls between monitors.
//!
//! ```text
//!  x ->  0        dw   dw+bx     2dw+bx
//!        +--------+----+--------+
//!        | (0,0)  | bz | (0,1)  |   display (row, col) starts at
//!        +--------+----+--------+   (col * (dw + bx), row * (dh + by))
//!        |   bezel strip (by)   |
//!        +--------+----+--------+
//!        | (1,0)  | bz | (1,1)  |
//!        +--------+----+--------+
//! ```

use alloc::vec::Vec;
use core::fmt;

/// Axis-aligned pixel rectangle in virtual-framebuffer coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Rect {
            x,
            y,
            width,
            height,
        }
    }

    /// Exclusive right edge, widened so `x + width` never overflows.
    #[inline]
    pub fn right(&self) -> u64 {
        self.x as u64 + self.width as u64
    }

    #[inline]
    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.height as u64
    }

    #[inline]
    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn contains_point(&self, px: u32, py: u32) -> bool {
        px >= self.x && (px as u64) < self.right() && py >= self.y && (py as u64) < self.bottom()
    }

    /// Nonempty intersection of two rectangles, if any.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if (x0 as u64) < x1 && (y0 as u64) < y1 {
            Some(Rect::new(x0, y0, (x1 - x0 as u64) as u32, (y1 - y0 as u64) as u32))
        } else {
            None
        }
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}+{}+{}", self.width, self.height, self.x, self.y)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("display id {id} out of range (wall has {count} displays)")]
    DisplayOutOfRange { id: usize, count: usize },
    #[error("rect {rect} exceeds the {width}x{height} virtual framebuffer")]
    OutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("rect {0} is empty")]
    EmptyRect(Rect),
}

/// Grid layout of a wall: uniform display size and uniform bezels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WallGeometry {
    pub columns: u32,
    pub rows: u32,
    pub display_width: u32,
    pub display_height: u32,
    pub bezel_x: u32,
    pub bezel_y: u32,
}

impl WallGeometry {
    pub fn display_count(&self) -> usize {
        self.columns as usize * self.rows as usize
    }

    fn pitch_x(&self) -> u64 {
        self.display_width as u64 + self.bezel_x as u64
    }

    fn pitch_y(&self) -> u64 {
        self.display_height as u64 + self.bezel_y as u64
    }

    /// Size of the single virtual framebuffer, bezel strips included.
    pub fn virtual_size(&self) -> (u32, u32) {
        let w = self.columns as u64 * self.display_width as u64
            + self.columns.saturating_sub(1) as u64 * self.bezel_x as u64;
        let h = self.rows as u64 * self.display_height as u64
            + self.rows.saturating_sub(1) as u64 * self.bezel_y as u64;
        (w as u32, h as u32)
    }

    pub fn virtual_rect(&self) -> Rect {
        let (w, h) = self.virtual_size();
        Rect::new(0, 0, w, h)
    }

    /// Row-major display index of grid cell `(row, col)`.
    pub fn display_id(&self, row: u32, col: u32) -> usize {
        row as usize * self.columns as usize + col as usize
    }

    pub fn grid_position(&self, display_id: usize) -> (u32, u32) {
        let cols = self.columns as usize;
        ((display_id / cols) as u32, (display_id % cols) as u32)
    }

    /// The visible region of one display inside the virtual framebuffer.
    pub fn display_region(&self, display_id: usize) -> Result<Rect, GeometryError> {
        let count = self.display_count();
        if display_id >= count {
            return Err(GeometryError::DisplayOutOfRange {
                id: display_id,
                count,
            });
        }
        let (row, col) = self.grid_position(display_id);
        Ok(Rect::new(
            (col as u64 * self.pitch_x()) as u32,
            (row as u64 * self.pitch_y()) as u32,
            self.display_width,
            self.display_height,
        ))
    }

    /// All displays overlapped by `tile`, with the overlap in virtual
    /// coordinates, in ascending display order. Empty iff the tile lies
    /// entirely inside bezel strips.
    pub fn route_rect(&self, tile: &Rect) -> Result<Vec<(usize, Rect)>, GeometryError> {
        if tile.is_empty() {
            return Err(GeometryError::EmptyRect(*tile));
        }
        let (vw, vh) = self.virtual_size();
        if tile.right() > vw as u64 || tile.bottom() > vh as u64 {
            return Err(GeometryError::OutOfBounds {
                rect: *tile,
                width: vw,
                height: vh,
            });
        }
        let (c0, c1) = span(tile.x as u64, tile.right(), self.pitch_x(), self.columns);
        let (r0, r1) = span(tile.y as u64, tile.bottom(), self.pitch_y(), self.rows);
        let mut out = Vec::with_capacity(((c1 - c0) * (r1 - r0)) as usize);
        for row in r0..r1 {
            for col in c0..c1 {
                let id = self.display_id(row, col);
                // the region exists for every in-grid cell
                let region = self.display_region(id)?;
                if let Some(overlap) = region.intersect(tile) {
                    out.push((id, overlap));
                }
            }
        }
        Ok(out)
    }
}

/// Candidate grid cells `[first, last)` touched by the half-open interval
/// `[start, end)` along one axis with the given pitch.
fn span(start: u64, end: u64, pitch: u64, cells: u32) -> (u32, u32) {
    let first = (start / pitch) as u32;
    let last = ((end - 1) / pitch) as u32 + 1;
    (first.min(cells), last.min(cells))
}
