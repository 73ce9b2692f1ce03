// SPDX-License-Identifier: Apache-2.0

//! Per-display pixel coverage and framebuffer writes.
//!
//! A display's frame is complete once every pixel of its region has been
//! written at least once. Coverage is a bitmask, so duplicate or overlapping
//! tiles never count twice and tile arrival order does not matter.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::Rect;
use crate::pixels::PixelBuffer;
use crate::protocol::TileHeader;

/// One bit per pixel of a `width x height` region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
    covered: u64,
}

impl CoverageMask {
    pub fn new(width: u32, height: u32) -> Self {
        let bits = width as usize * height as usize;
        CoverageMask {
            width,
            height,
            words: vec![0; bits.div_ceil(64)],
            covered: 0,
        }
    }

    pub fn expected(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn covered(&self) -> u64 {
        self.covered
    }

    pub fn is_complete(&self) -> bool {
        self.covered == self.expected()
    }

    pub fn is_set(&self, x: u32, y: u32) -> bool {
        let bit = y as usize * self.width as usize + x as usize;
        self.words[bit / 64] & (1 << (bit % 64)) != 0
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
        self.covered = 0;
    }

    /// Sets every bit in `rect` (local coordinates, must lie inside the
    /// mask) and returns how many were newly set.
    pub fn mark(&mut self, rect: &Rect) -> u64 {
        debug_assert!(rect.right() <= self.width as u64 && rect.bottom() <= self.height as u64);
        let mut added = 0u64;
        for y in rect.y..rect.y + rect.height {
            let row = y as usize * self.width as usize;
            let mut bit = row + rect.x as usize;
            let end = bit + rect.width as usize;
            while bit < end {
                let word = bit / 64;
                let lo = bit % 64;
                let n = (64 - lo).min(end - bit);
                let mask = if n == 64 { u64::MAX } else { ((1u64 << n) - 1) << lo };
                added += (mask & !self.words[word]).count_ones() as u64;
                self.words[word] |= mask;
                bit += n;
            }
        }
        self.covered += added;
        added
    }

    /// Population count recomputed from the bits.
    pub fn count_bits(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum WriteError {
    #[error("tile pixels are {got_w}x{got_h}, header says {want_w}x{want_h}")]
    Extent {
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("tile belongs to frame {tile}, framebuffer is on frame {current}")]
    WrongFrame { tile: u32, current: u32 },
}

/// One display's shard of the virtual framebuffer plus the coverage of the
/// frame currently being assembled.
#[derive(Clone, Debug)]
pub struct DisplayFramebuffer {
    display_id: usize,
    region: Rect,
    pixels: PixelBuffer,
    frame_id: u32,
    coverage: CoverageMask,
}

impl DisplayFramebuffer {
    pub fn new(display_id: usize, region: Rect) -> Self {
        DisplayFramebuffer {
            display_id,
            region,
            pixels: PixelBuffer::zeroed(region.width, region.height),
            frame_id: 0,
            coverage: CoverageMask::new(region.width, region.height),
        }
    }

    pub fn display_id(&self) -> usize {
        self.display_id
    }

    pub fn region(&self) -> Rect {
        self.region
    }

    pub fn frame_id(&self) -> u32 {
        self.frame_id
    }

    pub fn pixels(&self) -> &PixelBuffer {
        &self.pixels
    }

    pub fn coverage(&self) -> &CoverageMask {
        &self.coverage
    }

    pub fn is_complete(&self) -> bool {
        self.coverage.is_complete()
    }

    /// Starts assembling `frame_id`. Pixels keep the previous frame's content
    /// until overwritten.
    pub fn begin_frame(&mut self, frame_id: u32) {
        self.frame_id = frame_id;
        self.coverage.clear();
    }

    /// Copies the part of `tile` inside this display's region into local
    /// coordinates and returns the number of newly covered pixels. A tile
    /// that misses the region is a zero-pixel no-op.
    pub fn write_tile(&mut self, header: &TileHeader, tile: &PixelBuffer) -> Result<u64, WriteError> {
        if header.frame_id != self.frame_id {
            return Err(WriteError::WrongFrame {
                tile: header.frame_id,
                current: self.frame_id,
            });
        }
        if tile.width() != header.width || tile.height() != header.height {
            return Err(WriteError::Extent {
                want_w: header.width,
                want_h: header.height,
                got_w: tile.width(),
                got_h: tile.height(),
            });
        }
        let Some(overlap) = self.region.intersect(&header.rect()) else {
            return Ok(0);
        };
        let local = Rect::new(
            overlap.x - self.region.x,
            overlap.y - self.region.y,
            overlap.width,
            overlap.height,
        );
        let src_x = (overlap.x - header.x) as usize;
        let src_y = (overlap.y - header.y) as usize;
        let span = overlap.width as usize * 4;
        let src_stride = tile.width() as usize * 4;
        let dst_stride = self.region.width as usize * 4;
        let src = tile.as_bytes();
        let dst = self.pixels.as_bytes_mut();
        for row in 0..overlap.height as usize {
            let s = (src_y + row) * src_stride + src_x * 4;
            let d = (local.y as usize + row) * dst_stride + local.x as usize * 4;
            dst[d..d + span].copy_from_slice(&src[s..s + span]);
        }
        Ok(self.coverage.mark(&local))
    }
}
