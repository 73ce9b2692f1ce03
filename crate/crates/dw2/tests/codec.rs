// SPDX-License-Identifier: Apache-2.0

use dw2::codec::*;
use dw2::{Codec, PixelBuffer};

fn gradient(w: u32, h: u32) -> PixelBuffer {
    let mut b = PixelBuffer::zeroed(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = ((y * w + x) * 4) as usize;
            b.as_bytes_mut()[i..i + 4].copy_from_slice(&[(x * 4) as u8, (y * 4) as u8, 128, 200]);
        }
    }
    b
}

#[test]
fn raw_is_identity() {
    let b = gradient(13, 7);
    let (codec, payload) = compress(&b, Quality::Raw).unwrap();
    assert_eq!(codec, Codec::RawRgba8);
    assert_eq!(payload, b.as_bytes());
    assert_eq!(decompress(codec, &payload, 13, 7).unwrap(), b);
}

#[test]
fn constant_colour_compresses_well() {
    let b = PixelBuffer::filled(64, 64, [40, 90, 200, 255]);
    let (codec, payload) = compress(&b, Quality::Jpeg(75)).unwrap();
    assert_eq!(codec, Codec::Jpeg);
    assert!(payload.len() * 4 < 16384, "{} bytes", payload.len());
    assert_eq!(&payload[..2], &[0xFF, 0xD8]);
}

#[test]
fn jpeg_round_trip_is_opaque_and_close() {
    let b = gradient(48, 40);
    let (codec, payload) = compress(&b, Quality::Jpeg(90)).unwrap();
    let d = decompress(codec, &payload, 48, 40).unwrap();
    assert!(d.as_bytes().chunks(4).all(|p| p[3] == 255));
    assert!(psnr(&b, &d).unwrap() > 35.0);
}

#[test]
fn corrupt_payloads_are_rejected() {
    let b = gradient(32, 32);
    let (codec, payload) = compress(&b, Quality::Jpeg(75)).unwrap();
    let cut = &payload[..payload.len() / 2];
    assert!(matches!(decompress(codec, cut, 32, 32), Err(CodecError::Corrupt(_))));
    assert!(matches!(
        decompress(codec, &payload, 16, 32),
        Err(CodecError::Dimensions { .. })
    ));
    assert!(decompress(Codec::RawRgba8, &[0; 7], 1, 2).is_err());
    assert!(decompress(Codec::Jpeg, b"not a jpeg", 1, 1).is_err());
}

#[test]
fn zero_sized_buffer() {
    let b = PixelBuffer::zeroed(0, 5);
    assert!(matches!(compress(&b, Quality::Raw), Err(CodecError::Empty)));
}

#[test]
fn psnr_values() {
    let a = gradient(8, 8);
    assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    let mut b = a.clone();
    for px in b.as_bytes_mut().chunks_mut(4) {
        for c in &mut px[..3] {
            *c = if *c == 255 { 254 } else { *c + 1 };
        }
    }
    // 20 * log10(255 / 1)
    assert!((psnr(&a, &b).unwrap() - 48.1308).abs() < 1e-3);
    assert!(psnr(&a, &gradient(8, 4)).is_err());
}

#[test]
fn quality_parsing() {
    assert_eq!("raw".parse::<Quality>().unwrap(), Quality::Raw);
    assert_eq!("75".parse::<Quality>().unwrap(), Quality::Jpeg(75));
    assert!("0".parse::<Quality>().is_err());
    assert!("101".parse::<Quality>().is_err());
}
