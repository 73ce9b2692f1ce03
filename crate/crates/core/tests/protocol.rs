// SPDX-License-Identifier: Apache-2.0

use dw2_core::protocol::*;
use dw2_core::*;

#[test]
fn query_info_is_tag_only() {
    assert_eq!(encode(&Message::QueryInfo).unwrap(), [1, 0, 0, 0, tag::QUERY_INFO]);
}

#[test]
fn tile_layout() {
    let m = Message::tile(0, Rect::new(0, 0, 1, 1), Codec::RawRgba8, vec![1, 2, 3, 4]);
    let b = encode(&m).unwrap();
    assert_eq!(b.len(), 4 + 1 + 4 + 21 + 4);
    assert_eq!(&b[..4], &30u32.to_le_bytes());
    assert_eq!(b[4], tag::TILE);
    assert_eq!(&b[b.len() - 4..], &[1, 2, 3, 4]);
    assert_eq!(decode(&b).unwrap(), m);
}

#[test]
fn truncated_tile() {
    let m = Message::tile(3, Rect::new(5, 6, 2, 1), Codec::RawRgba8, vec![9; 8]);
    let b = encode(&m).unwrap();
    for cut in 0..b.len() {
        assert!(matches!(decode(&b[..cut]), Err(DecodeError::Truncated { .. })), "cut {cut}");
    }
}

#[test]
fn unknown_tag() {
    assert_eq!(decode(&[1, 0, 0, 0, 0xFF]), Err(DecodeError::UnknownTag(0xFF)));
}

#[test]
fn extra_bytes_are_a_length_mismatch() {
    let mut b = encode(&Message::RegisterAck).unwrap();
    b.push(0);
    assert_eq!(
        decode(&b),
        Err(DecodeError::LengthMismatch {
            declared: 1,
            actual: 2
        })
    );
}

#[test]
fn body_longer_than_message_is_trailing() {
    // NextFrameToken with 2 stray bytes inside the declared length
    let b = [7, 0, 0, 0, tag::NEXT_FRAME_TOKEN, 1, 0, 0, 0, 0xAA, 0xBB];
    assert_eq!(decode(&b), Err(DecodeError::Trailing(2)));
}

#[test]
fn raw_tile_length_is_enforced() {
    let m = Message::tile(0, Rect::new(0, 0, 2, 2), Codec::RawRgba8, vec![0; 4]);
    assert_eq!(
        encode(&m),
        Err(EncodeError::InvalidTile(InvalidTile::RawLength))
    );
    let mut b = encode(&Message::tile(0, Rect::new(0, 0, 1, 1), Codec::RawRgba8, vec![0; 4]))
        .unwrap();
    // rewrite width to 2
    b[4 + 1 + 12] = 2;
    assert_eq!(decode(&b), Err(DecodeError::InvalidTile(InvalidTile::RawLength)));
}

#[test]
fn peek_reads_header_only() {
    let m = Message::tile(9, Rect::new(10, 20, 3, 4), Codec::Jpeg, vec![0xAB; 17]);
    let b = encode(&m).unwrap();
    let h = peek_tile_header(&b, true).unwrap();
    assert_eq!(h.frame_id, 9);
    assert_eq!(h.rect(), Rect::new(10, 20, 3, 4));
    assert_eq!(h.payload_len, 17);
    assert!(peek_tile_header(&b[..b.len() - 1], true).is_err());
    assert!(peek_tile_header(&encode(&Message::Shutdown).unwrap(), true).is_err());
}

#[test]
fn info_reply_round_trip() {
    let m = Message::InfoReply {
        virtual_width: 640,
        virtual_height: 480,
        mode: Mode::Direct,
        session_token: 0xDEAD_BEEF_0123_4567,
        frames_in_flight: 2,
        dispatcher: None,
        displays: vec![DirectoryEntry {
            display_id: 1,
            endpoint: Endpoint::new("127.0.0.1", 7001),
            region: Rect::new(320, 0, 320, 240),
        }],
    };
    let b = encode(&m).unwrap();
    assert_eq!(decode(&b).unwrap(), m);
}

#[test]
fn absurd_directory_count_is_truncation() {
    let mut b = encode(&Message::InfoReply {
        virtual_width: 1,
        virtual_height: 1,
        mode: Mode::Direct,
        session_token: 1,
        frames_in_flight: 1,
        dispatcher: None,
        displays: Vec::new(),
    })
    .unwrap();
    let n = b.len();
    b[n - 4..].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(matches!(decode(&b), Err(DecodeError::Truncated { .. })));
}

#[test]
fn frame_length_bounds() {
    assert_eq!(frame_length([0; 4]), Err(DecodeError::BadLength(0)));
    assert!(frame_length(u32::MAX.to_le_bytes()).is_err());
    assert_eq!(frame_length(5u32.to_le_bytes()), Ok(5));
}
