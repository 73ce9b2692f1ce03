// SPDX-License-Identifier: Apache-2.0

use dw2_core::protocol::{decode, decode_body, encode, peek_tile_header, LENGTH_PREFIX};
use dw2_core::{Codec, DirectoryEntry, Endpoint, Message, Mode, Rect, Role};
use proptest::prelude::*;

fn arb_endpoint() -> impl Strategy<Value = Endpoint> {
    ("[a-z0-9.-]{0,24}", any::<u16>()).prop_map(|(h, p)| Endpoint::new(h, p))
}

fn arb_rect() -> impl Strategy<Value = Rect> {
    (any::<u32>(), any::<u32>(), any::<u32>(), any::<u32>())
        .prop_map(|(x, y, w, h)| Rect::new(x, y, w, h))
}

fn arb_tile() -> impl Strategy<Value = Message> {
    prop_oneof![
        (any::<u32>(), any::<u32>(), any::<u32>(), 1u32..8, 1u32..8).prop_flat_map(
            |(f, x, y, w, h)| {
                proptest::collection::vec(any::<u8>(), (w * h * 4) as usize).prop_map(
                    move |p| Message::tile(f, Rect::new(x, y, w, h), Codec::RawRgba8, p),
                )
            }
        ),
        (
            any::<u32>(),
            any::<u32>(),
            any::<u32>(),
            1u32..=u32::MAX,
            1u32..=u32::MAX,
            proptest::collection::vec(any::<u8>(), 0..256)
        )
            .prop_map(|(f, x, y, w, h, p)| Message::tile(f, Rect::new(x, y, w, h), Codec::Jpeg, p)),
    ]
}

fn arb_message() -> impl Strategy<Value = Message> {
    prop_oneof![
        Just(Message::QueryInfo),
        Just(Message::RegisterAck),
        Just(Message::Shutdown),
        (
            any::<u32>(),
            any::<u32>(),
            any::<bool>(),
            any::<u64>(),
            any::<u32>(),
            proptest::option::of(arb_endpoint()),
            proptest::collection::vec((any::<u32>(), arb_endpoint(), arb_rect()), 0..6)
        )
            .prop_map(|(w, h, direct, token, fif, dispatcher, dirs)| Message::InfoReply {
                virtual_width: w,
                virtual_height: h,
                mode: if direct { Mode::Direct } else { Mode::Dispatcher },
                session_token: token,
                frames_in_flight: fif,
                dispatcher,
                displays: dirs
                    .into_iter()
                    .map(|(display_id, endpoint, region)| DirectoryEntry {
                        display_id,
                        endpoint,
                        region
                    })
                    .collect(),
            }),
        (any::<u64>(), any::<u32>(), any::<u32>()).prop_map(|(t, r, c)| Message::Register {
            session_token: t,
            peer_rank: r,
            peer_count: c
        }),
        arb_tile(),
        (any::<u32>(), any::<u32>()).prop_map(|(f, d)| Message::DisplayFrameComplete {
            frame_id: f,
            display_id: d
        }),
        any::<u32>().prop_map(|f| Message::NextFrameToken { frame_id: f }),
        (any::<bool>(), any::<u32>()).prop_map(|(d, i)| Message::Join {
            role: if d { Role::Display } else { Role::Dispatcher },
            index: i
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn round_trip(m in arb_message()) {
        let bytes = encode(&m).unwrap();
        let declared = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        prop_assert_eq!(declared + LENGTH_PREFIX, bytes.len());
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn tile_header_peek_agrees_with_decode(m in arb_tile()) {
        let bytes = encode(&m).unwrap();
        let Message::Tile { header, .. } = &m else { unreachable!() };
        prop_assert_eq!(&peek_tile_header(&bytes, true).unwrap(), header);
        prop_assert_eq!(&peek_tile_header(&bytes[LENGTH_PREFIX..], false).unwrap(), header);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    /// Decoding arbitrary bytes must fail cleanly and never look past the
    /// declared body: a body decoded from a longer buffer gives the same
    /// answer as from the exact slice.
    #[test]
    fn decode_is_bounded(body in proptest::collection::vec(any::<u8>(), 1..64), junk in proptest::collection::vec(any::<u8>(), 0..16)) {
        let alone = decode_body(&body);
        let mut frame = (body.len() as u32).to_le_bytes().to_vec();
        frame.extend_from_slice(&body);
        prop_assert_eq!(decode(&frame), alone.clone());
        frame.extend_from_slice(&junk);
        if !junk.is_empty() {
            prop_assert!(decode(&frame).is_err());
        }
    }
}
