// SPDX-License-Identifier: Apache-2.0

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::Rect;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PixelError {
    #[error("{width}x{height} RGBA8 buffer needs {expected} bytes, got {got}")]
    Length {
        width: u32,
        height: u32,
        expected: usize,
        got: usize,
    },
    #[error("pixel buffer has zero extent")]
    Empty,
    #[error("crop {rect} exceeds {width}x{height} buffer")]
    Crop { rect: Rect, width: u32, height: u32 },
}

/// Row-major RGBA8 pixels, 4 bytes per pixel, no row padding.
#[derive(Clone, PartialEq, Eq)]
pub struct PixelBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl core::fmt::Debug for PixelBuffer {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PixelBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl PixelBuffer {
    pub fn from_rgba(width: u32, height: u32, data: Vec<u8>) -> Result<Self, PixelError> {
        let expected = width as usize * height as usize * 4;
        if data.len() != expected {
            return Err(PixelError::Length {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        Ok(PixelBuffer {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgba: [u8; 4]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 4);
        for _ in 0..n {
            data.extend_from_slice(&rgba);
        }
        PixelBuffer {
            width,
            height,
            data,
        }
    }

    pub fn zeroed(width: u32, height: u32) -> Self {
        PixelBuffer {
            width,
            height,
            data: vec![0; width as usize * height as usize * 4],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        [self.data[i], self.data[i + 1], self.data[i + 2], self.data[i + 3]]
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let stride = self.width as usize * 4;
        &self.data[y as usize * stride..(y as usize + 1) * stride]
    }

    /// Copies out `rect`, given in this buffer's own coordinates.
    pub fn crop(&self, rect: &Rect) -> Result<PixelBuffer, PixelError> {
        if rect.right() > self.width as u64 || rect.bottom() > self.height as u64 {
            return Err(PixelError::Crop {
                rect: *rect,
                width: self.width,
                height: self.height,
            });
        }
        let stride = self.width as usize * 4;
        let span = rect.width as usize * 4;
        let mut data = Vec::with_capacity(span * rect.height as usize);
        for y in rect.y..rect.y + rect.height {
            let start = y as usize * stride + rect.x as usize * 4;
            data.extend_from_slice(&self.data[start..start + span]);
        }
        Ok(PixelBuffer {
            width: rect.width,
            height: rect.height,
            data,
        })
    }
}
