// SPDX-License-Identifier: Apache-2.0

//! Tile payload compression.
//!
//! JPEG payloads are baseline JFIF with 4:2:0 chroma subsampling so sizes are
//! comparable across runs. Alpha is dropped on the wire and decodes opaque.

use std::fmt;
use std::str::FromStr;

use dw2_core::{Codec, PixelBuffer};
use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use zune_core::bytestream::ZCursor;
use zune_core::colorspace::ColorSpace;
use zune_core::options::DecoderOptions;
use zune_jpeg::JpegDecoder;

/// Compression setting chosen by the client.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quality {
    Raw,
    /// JPEG quality in 1..=100.
    Jpeg(u8),
}

impl Quality {
    pub fn jpeg(q: u8) -> Result<Quality, CodecError> {
        if (1..=100).contains(&q) {
            Ok(Quality::Jpeg(q))
        } else {
            Err(CodecError::Quality(q as u32))
        }
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quality::Raw => f.write_str("raw"),
            Quality::Jpeg(q) => write!(f, "{q}"),
        }
    }
}

impl FromStr for Quality {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("raw") {
            return Ok(Quality::Raw);
        }
        let q: u32 = s.parse().map_err(|_| CodecError::Quality(0))?;
        if q == 0 || q > 100 {
            return Err(CodecError::Quality(q));
        }
        Ok(Quality::Jpeg(q as u8))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("cannot compress a zero-sized buffer")]
    Empty,
    #[error("JPEG quality must be raw or 1..=100, got {0}")]
    Quality(u32),
    #[error("{width}x{height} exceeds the JPEG dimension limit of 65535")]
    TooLarge { width: u32, height: u32 },
    #[error("jpeg encode: {0}")]
    Encode(String),
    #[error("corrupt payload: {0}")]
    Corrupt(String),
    #[error("payload decodes to {got_w}x{got_h}, header says {want_w}x{want_h}")]
    Dimensions {
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("cannot compare {0}x{1} with {2}x{3}")]
    Mismatch(u32, u32, u32, u32),
}

pub fn compress(pixels: &PixelBuffer, quality: Quality) -> Result<(Codec, Vec<u8>), CodecError> {
    if pixels.is_empty() {
        return Err(CodecError::Empty);
    }
    let q = match quality {
        Quality::Raw => return Ok((Codec::RawRgba8, pixels.as_bytes().to_vec())),
        Quality::Jpeg(q) if (1..=100).contains(&q) => q,
        Quality::Jpeg(q) => return Err(CodecError::Quality(q as u32)),
    };
    let (w, h) = (pixels.width(), pixels.height());
    if w > u16::MAX as u32 || h > u16::MAX as u32 {
        return Err(CodecError::TooLarge {
            width: w,
            height: h,
        });
    }
    let mut out = Vec::with_capacity(pixels.as_bytes().len() / 8);
    let mut encoder = Encoder::new(&mut out, q);
    encoder.set_sampling_factor(SamplingFactor::R_4_2_0);
    encoder
        .encode(pixels.as_bytes(), w as u16, h as u16, ColorType::Rgba)
        .map_err(|e| CodecError::Encode(e.to_string()))?;
    Ok((Codec::Jpeg, out))
}

pub fn decompress(codec: Codec, payload: &[u8], width: u32, height: u32) -> Result<PixelBuffer, CodecError> {
    match codec {
        Codec::RawRgba8 => {
            let expected = width as usize * height as usize * 4;
            if payload.len() != expected {
                return Err(CodecError::Corrupt(format!(
                    "raw payload of {} bytes for {width}x{height}",
                    payload.len()
                )));
            }
            PixelBuffer::from_rgba(width, height, payload.to_vec()).map_err(|e| CodecError::Corrupt(e.to_string()))
        }
        Codec::Jpeg => {
            let options = DecoderOptions::default()
                .jpeg_set_out_colorspace(ColorSpace::RGBA)
                .set_strict_mode(true);
            let mut decoder = JpegDecoder::new_with_options(ZCursor::new(payload), options);
            decoder
                .decode_headers()
                .map_err(|e| CodecError::Corrupt(format!("{e:?}")))?;
            let (got_w, got_h) = decoder
                .dimensions()
                .map(|(w, h)| (w as u32, h as u32))
                .ok_or_else(|| CodecError::Corrupt("missing frame header".into()))?;
            if (got_w, got_h) != (width, height) {
                return Err(CodecError::Dimensions {
                    want_w: width,
                    want_h: height,
                    got_w,
                    got_h,
                });
            }
            let mut rgba = decoder
                .decode()
                .map_err(|e| CodecError::Corrupt(format!("{e:?}")))?;
            if rgba.len() != width as usize * height as usize * 4 {
                return Err(CodecError::Corrupt(format!(
                    "decoder produced {} bytes",
                    rgba.len()
                )));
            }
            for px in rgba.chunks_exact_mut(4) {
                px[3] = 255;
            }
            PixelBuffer::from_rgba(width, height, rgba).map_err(|e| CodecError::Corrupt(e.to_string()))
        }
    }
}

/// Peak signal-to-noise ratio over the RGB channels, in dB. Identical
/// buffers give `f64::INFINITY`.
pub fn psnr(a: &PixelBuffer, b: &PixelBuffer) -> Result<f64, CodecError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(CodecError::Mismatch(a.width(), a.height(), b.width(), b.height()));
    }
    let mut sum = 0u64;
    for (pa, pb) in a.as_bytes().chunks_exact(4).zip(b.as_bytes().chunks_exact(4)) {
        for c in 0..3 {
            let d = pa[c] as i64 - pb[c] as i64;
            sum += (d * d) as u64;
        }
    }
    if sum == 0 {
        return Ok(f64::INFINITY);
    }
    let samples = a.width() as f64 * a.height() as f64 * 3.0;
    let mse = sum as f64 / samples;
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}
