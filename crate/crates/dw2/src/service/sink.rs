// SPDX-License-Identifier: Apache-2.0

//! Display sinks: where a finished per-display framebuffer goes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use dw2_core::PixelBuffer;
use image::{ExtendedColorType, ImageFormat};

#[derive(Debug, thiserror::Error)]
pub enum SinkError {
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: image::ImageError },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("the window sink is not available in this build; use png:<dir> or null")]
    WindowUnavailable,
    #[error("unknown sink '{0}', expected png:<dir>, null or window")]
    Unknown(String),
}

pub trait FrameSink: Send {
    /// False lets the display skip copying pixels out of the framebuffer.
    fn wants_pixels(&self) -> bool {
        true
    }

    fn present(&mut self, display_id: usize, frame_id: u32, pixels: &PixelBuffer) -> Result<(), SinkError>;
}

/// Discards frames; used for benchmarking.
#[derive(Debug, Default)]
pub struct NullSink;

impl FrameSink for NullSink {
    fn wants_pixels(&self) -> bool {
        false
    }

    fn present(&mut self, _: usize, _: u32, _: &PixelBuffer) -> Result<(), SinkError> {
        Ok(())
    }
}

/// Writes `frame_<frame>_display_<display>.png` into a directory. Files are
/// written under a temporary name and renamed, so readers never see a
/// partial image.
#[derive(Debug)]
pub struct PngSink {
    dir: PathBuf,
}

pub fn png_path(dir: &Path, display_id: usize, frame_id: u32) -> PathBuf {
    dir.join(format!("frame_{frame_id}_display_{display_id}.png"))
}

impl PngSink {
    pub fn new(dir: impl Into<PathBuf>) -> Result<PngSink, SinkError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(PngSink { dir })
    }
}

impl FrameSink for PngSink {
    fn present(&mut self, display_id: usize, frame_id: u32, pixels: &PixelBuffer) -> Result<(), SinkError> {
        let path = png_path(&self.dir, display_id, frame_id);
        let tmp = path.with_extension("png.tmp");
        image::save_buffer_with_format(
            &tmp,
            pixels.as_bytes(),
            pixels.width(),
            pixels.height(),
            ExtendedColorType::Rgba8,
            ImageFormat::Png,
        )
        .map_err(|source| SinkError::Write {
            path: tmp.clone(),
            source,
        })?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }
}

pub type FrameStore = Arc<Mutex<BTreeMap<(usize, u32), PixelBuffer>>>;

/// Keeps every presented frame in memory, keyed by (display, frame).
#[derive(Clone, Debug, Default)]
pub struct MemorySink {
    pub frames: FrameStore,
}

impl FrameSink for MemorySink {
    fn present(&mut self, display_id: usize, frame_id: u32, pixels: &PixelBuffer) -> Result<(), SinkError> {
        self.frames
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert((display_id, frame_id), pixels.clone());
        Ok(())
    }
}

/// Sink selection as given on the command line.
#[derive(Clone, Debug, Default)]
pub enum SinkSpec {
    #[default]
    Null,
    Png(PathBuf),
    Window,
    Memory(FrameStore),
}

impl FromStr for SinkSpec {
    type Err = SinkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "null" => Ok(SinkSpec::Null),
            "window" => Ok(SinkSpec::Window),
            _ => match s.strip_prefix("png:") {
                Some(dir) if !dir.is_empty() => Ok(SinkSpec::Png(dir.into())),
                _ => Err(SinkError::Unknown(s.to_string())),
            },
        }
    }
}

impl fmt::Display for SinkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SinkSpec::Null => f.write_str("null"),
            SinkSpec::Png(d) => write!(f, "png:{}", d.display()),
            SinkSpec::Window => f.write_str("window"),
            SinkSpec::Memory(_) => f.write_str("memory"),
        }
    }
}

impl SinkSpec {
    pub fn build(&self) -> Result<Box<dyn FrameSink>, SinkError> {
        Ok(match self {
            SinkSpec::Null => Box::new(NullSink),
            SinkSpec::Png(dir) => Box::new(PngSink::new(dir)?),
            SinkSpec::Window => return Err(SinkError::WindowUnavailable),
            SinkSpec::Memory(store) => Box::new(MemorySink {
                frames: store.clone(),
            }),
        })
    }
}
