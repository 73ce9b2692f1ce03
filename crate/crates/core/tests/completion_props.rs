// SPDX-License-Identifier: Apache-2.0

use dw2_core::protocol::TileHeader;
use dw2_core::{Codec, Completion, DisplayFramebuffer, PixelBuffer, Rect, TokenWindow};
use proptest::prelude::*;

const REGION: Rect = Rect::new(320, 0, 96, 64);

/// Source pixel colour as a function of virtual coordinates.
fn colour(x: u32, y: u32) -> [u8; 4] {
    [(x % 251) as u8, (y % 241) as u8, ((x * 7 + y) % 256) as u8, 255]
}

fn tile_at(frame_id: u32, rect: Rect) -> (TileHeader, PixelBuffer) {
    let mut px = PixelBuffer::zeroed(rect.width, rect.height);
    for y in 0..rect.height {
        for x in 0..rect.width {
            let i = ((y * rect.width + x) * 4) as usize;
            px.as_bytes_mut()[i..i + 4].copy_from_slice(&colour(rect.x + x, rect.y + y));
        }
    }
    let header = TileHeader {
        frame_id,
        x: rect.x,
        y: rect.y,
        width: rect.width,
        height: rect.height,
        codec: Codec::RawRgba8,
        payload_len: rect.width * rect.height * 4,
    };
    (header, px)
}

/// Tiles of `size` covering a window around the region, so edge tiles
/// straddle the region boundary.
fn cover(size: u32) -> Vec<Rect> {
    let mut v = Vec::new();
    let mut y = 0;
    while y < REGION.bottom() as u32 {
        let mut x = 300;
        while x < REGION.right() as u32 + 10 {
            v.push(Rect::new(x, y, size, size));
            x += size;
        }
        y += size;
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn completes_exactly_once_in_any_order(
        size in prop::sample::select(vec![7u32, 16, 32, 40]),
        seed in any::<u64>(),
        dups in proptest::collection::vec(any::<prop::sample::Index>(), 0..10),
    ) {
        let mut tiles = cover(size);
        for d in &dups {
            let t = tiles[d.index(tiles.len())];
            tiles.push(t);
        }
        // deterministic shuffle from the seed
        let mut state = seed | 1;
        for i in (1..tiles.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            tiles.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let mut fb = DisplayFramebuffer::new(1, REGION);
        let mut completions = 0;
        for rect in &tiles {
            let was = fb.is_complete();
            let (h, px) = tile_at(0, *rect);
            fb.write_tile(&h, &px).unwrap();
            if !was && fb.is_complete() {
                completions += 1;
            }
        }
        prop_assert_eq!(completions, 1);
        prop_assert_eq!(fb.coverage().count_bits(), fb.coverage().covered());
        for y in 0..REGION.height {
            for x in 0..REGION.width {
                prop_assert_eq!(fb.pixels().pixel(x, y), colour(REGION.x + x, REGION.y + y));
            }
        }
    }

    #[test]
    fn withholding_any_tile_blocks_completion(size in prop::sample::select(vec![16u32, 32]), skip in any::<prop::sample::Index>()) {
        let tiles = cover(size);
        let skip = skip.index(tiles.len());
        let mut fb = DisplayFramebuffer::new(1, REGION);
        for (i, rect) in tiles.iter().enumerate() {
            if i != skip {
                let (h, px) = tile_at(0, *rect);
                fb.write_tile(&h, &px).unwrap();
            }
        }
        let misses_region = REGION.intersect(&tiles[skip]).is_none();
        prop_assert_eq!(fb.is_complete(), misses_region);
    }

    /// The newest issued token never runs `frames_in_flight` or more ahead of
    /// the oldest incomplete frame, whatever order displays report in.
    #[test]
    fn token_window_never_overruns(
        fif in 1u32..5,
        displays in 1usize..5,
        order in proptest::collection::vec(any::<prop::sample::Index>(), 1..200),
    ) {
        let mut w = TokenWindow::new(fif, displays);
        let mut issued: Vec<u32> = w.start().collect();
        // per display: next frame it will complete (displays are sequential)
        let mut progress = vec![0u32; displays];
        for pick in order {
            let d = pick.index(displays);
            let f = progress[d];
            match w.report(f, d) {
                Completion::NotAdmitted => continue,
                Completion::Advanced { admit, .. } => issued.extend(admit),
                Completion::Pending { .. } => {}
                other => prop_assert!(false, "unexpected {:?}", other),
            }
            progress[d] += 1;
            let newest = *issued.last().unwrap();
            prop_assert!(newest - w.lowest_incomplete() < fif);
            prop_assert_eq!(w.lowest_incomplete(), *progress.iter().min().unwrap());
        }
        prop_assert!(issued.windows(2).all(|p| p[1] == p[0] + 1));
    }
}
