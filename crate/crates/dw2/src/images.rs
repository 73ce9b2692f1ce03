// SPDX-License-Identifier: Apache-2.0

//! Benchmark input images: deterministic generators and file loading.

use std::f32::consts::TAU;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dw2_core::PixelBuffer;
use image::imageops::FilterType;
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 0x5eed_d15b_1a77;

/// Hard-to-compress image: every `tile` x `tile` block gets its own random
/// colour ramp, overlaid with strong per-pixel noise, so colour varies
/// within each block and JPEG finds little redundancy.
pub fn generate_synthetic(width: u32, height: u32, tile: u32, seed: u64) -> PixelBuffer {
    let tile = tile.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bx = width.div_ceil(tile) as usize;
    let by = height.div_ceil(tile) as usize;
    let ramps: Vec<[[f32; 3]; 3]> = (0..bx * by)
        .map(|_| {
            let mut r = [[0f32; 3]; 3];
            let [base, dx, dy] = &mut r;
            for ((b, x), y) in base.iter_mut().zip(dx.iter_mut()).zip(dy.iter_mut()) {
                *b = rng.random_range(0.0..255.0);
                *x = rng.random_range(-2.0..2.0);
                *y = rng.random_range(-2.0..2.0);
            }
            r
        })
        .collect();
    let mut px = PixelBuffer::zeroed(width, height);
    let bytes = px.as_bytes_mut();
    for y in 0..height {
        for x in 0..width {
            let b = &ramps[(y / tile) as usize * bx + (x / tile) as usize];
            let (lx, ly) = ((x % tile) as f32, (y % tile) as f32);
            let i = (y as usize * width as usize + x as usize) * 4;
            for c in 0..3 {
                let noise: f32 = rng.random_range(-64.0..64.0);
                bytes[i + c] = (b[0][c] + b[1][c] * lx + b[2][c] * ly + noise).clamp(0.0, 255.0) as u8;
            }
            bytes[i + 3] = 255;
        }
    }
    px
}

/// Image with photographic statistics: smooth large-scale shading, a few
/// soft-edged objects, fine texture and light sensor noise.
pub fn generate_photographic(width: u32, height: u32, seed: u64) -> PixelBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width.max(1) as f32, height.max(1) as f32);
    let waves: Vec<([f32; 3], f32, f32, f32)> = (0..6)
        .map(|_| {
            let amp = [
                rng.random_range(10.0..40.0),
                rng.random_range(10.0..40.0),
                rng.random_range(10.0..40.0),
            ];
            let angle = rng.random_range(0.0..TAU);
            let freq = rng.random_range(0.5..4.0);
            (amp, angle, freq, rng.random_range(0.0..TAU))
        })
        .collect();
    let blobs: Vec<(f32, f32, f32, [f32; 3])> = (0..12)
        .map(|_| {
            (
                rng.random_range(0.0..w),
                rng.random_range(0.0..h),
                rng.random_range(0.04..0.2) * w.min(h).max(8.0),
                [
                    rng.random_range(-90.0..90.0),
                    rng.random_range(-90.0..90.0),
                    rng.random_range(-90.0..90.0),
                ],
            )
        })
        .collect();
    let tex_freq = rng.random_range(0.15..0.35);
    let base = [
        rng.random_range(90.0..160.0),
        rng.random_range(90.0..160.0),
        rng.random_range(90.0..160.0),
    ];
    let mut px = PixelBuffer::zeroed(width, height);
    let bytes = px.as_bytes_mut();
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f32, y as f32);
            let (u, v) = (fx / w, fy / h);
            let mut c = base;
            for (amp, angle, freq, phase) in &waves {
                let t = (u * angle.cos() + v * angle.sin()) * freq * TAU + phase;
                let s = t.sin();
                for k in 0..3 {
                    c[k] += amp[k] * s;
                }
            }
            for (bx, by, r, col) in &blobs {
                let d = ((fx - bx).powi(2) + (fy - by).powi(2)).sqrt() / r;
                // soft edge over roughly 10% of the radius
                let m = ((1.0 - d) * 10.0).clamp(0.0, 1.0);
                for k in 0..3 {
                    c[k] += col[k] * m;
                }
            }
            let texture = 6.0 * (fx * tex_freq).sin() * (fy * tex_freq * 1.3).cos();
            let i = (y as usize * width as usize + x as usize) * 4;
            for k in 0..3 {
                let noise: f32 = rng.random_range(-2.0..2.0);
                bytes[i + k] = (c[k] + texture + noise).clamp(0.0, 255.0) as u8;
            }
            bytes[i + 3] = 255;
        }
    }
    px
}

#[derive(Debug, thiserror::Error)]
pub enum ImageLoadError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: image::ImageError },
    #[error("{path} is {got_w}x{got_h}, the wall is {want_w}x{want_h}")]
    Dimensions {
        path: PathBuf,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
}

/// Loads an image file as RGBA8. Unless `strict`, an image of the wrong size
/// is rescaled with a warning.
pub fn load_image(path: &Path, width: u32, height: u32, strict: bool) -> Result<PixelBuffer, ImageLoadError> {
    let img = image::open(path)
        .map_err(|source| ImageLoadError::Read {
            path: path.to_path_buf(),
            source,
        })?
        .into_rgba8();
    let img = if img.dimensions() != (width, height) {
        if strict {
            return Err(ImageLoadError::Dimensions {
                path: path.to_path_buf(),
                got_w: img.width(),
                got_h: img.height(),
                want_w: width,
                want_h: height,
            });
        }
        warn!(
            "{} is {}x{}; rescaling to the {width}x{height} virtual framebuffer",
            path.display(),
            img.width(),
            img.height()
        );
        image::imageops::resize(&img, width, height, FilterType::Triangle)
    } else {
        img
    };
    Ok(PixelBuffer::from_rgba(width, height, img.into_raw()).expect("rgba8 buffer of matching size"))
}

/// Where benchmark frames come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ImageSource {
    Synthetic { seed: u64 },
    Photographic { seed: u64 },
    File(PathBuf),
}

impl ImageSource {
    /// Produces the image for a `width` x `height` wall. The synthetic image
    /// varies within blocks of `tile`.
    pub fn render(&self, width: u32, height: u32, tile: u32) -> Result<PixelBuffer, ImageLoadError> {
        match self {
            ImageSource::Synthetic { seed } => Ok(generate_synthetic(width, height, tile, *seed)),
            ImageSource::Photographic { seed } => Ok(generate_photographic(width, height, *seed)),
            ImageSource::File(p) => load_image(p, width, height, false),
        }
    }
}

impl FromStr for ImageSource {
    type Err = std::convert::Infallible;

    /// `synthetic`, `photo` (optionally `:<seed>`), or a file path.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, seed) = match s.split_once(':') {
            Some((n, seed)) if matches!(n, "synthetic" | "photo") => match seed.parse() {
                Ok(seed) => (n, seed),
                Err(_) => return Ok(ImageSource::File(s.into())),
            },
            _ => (s, DEFAULT_SEED),
        };
        Ok(match name {
            "synthetic" => ImageSource::Synthetic { seed },
            "photo" | "photographic" => ImageSource::Photographic { seed },
            _ => ImageSource::File(s.into()),
        })
    }
}

impl fmt::Display for ImageSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageSource::Synthetic { seed } => write!(f, "synthetic:{seed}"),
            ImageSource::Photographic { seed } => write!(f, "photo:{seed}"),
            ImageSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}
