// SPDX-License-Identifier: Apache-2.0

//! Wire messages and their fixed-layout binary framing.
//!
//! Every frame is `[u32 total_length][u8 tag][body]`, where `total_length`
//! counts the tag byte plus the body. Integers are little-endian and 32-bit
//! unless noted. Strings are a `u16` byte length followed by UTF-8.
//!
//! A tile body keeps its routing header uncompressed and in front of the
//! payload, at fixed offsets, so a dispatcher can route with
//! [`peek_tile_header`] without touching the payload:
//!
//! ```text
//! [frame_id u32][x u32][y u32][w u32][h u32][codec u8][payload_len u32][payload]
//! ```

use alloc::string::String;
use alloc::vec::Vec;

use crate::config::{Endpoint, Mode};
use crate::geometry::Rect;

/// Bytes of the length prefix.
pub const LENGTH_PREFIX: usize = 4;
/// Bytes of a tile header inside a tile body.
pub const TILE_HEADER_LEN: usize = 25;
/// Largest payload a tile may carry.
pub const MAX_PAYLOAD: usize = 1 << 31;
/// Largest `total_length` a reader accepts.
pub const MAX_FRAME_LEN: usize = MAX_PAYLOAD + 1 + TILE_HEADER_LEN;

pub mod tag {
    pub const QUERY_INFO: u8 = 1;
    pub const INFO_REPLY: u8 = 2;
    pub const REGISTER: u8 = 3;
    pub const REGISTER_ACK: u8 = 4;
    pub const TILE: u8 = 5;
    pub const DISPLAY_FRAME_COMPLETE: u8 = 6;
    pub const NEXT_FRAME_TOKEN: u8 = 7;
    pub const SHUTDOWN: u8 = 8;
    pub const JOIN: u8 = 9;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Codec {
    RawRgba8 = 0,
    Jpeg = 1,
}

impl Codec {
    pub fn from_u8(v: u8) -> Option<Codec> {
        match v {
            0 => Some(Codec::RawRgba8),
            1 => Some(Codec::Jpeg),
            _ => None,
        }
    }
}

/// Service-internal process joining the coordinator's control plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Display = 0,
    Dispatcher = 1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TileHeader {
    /// Frame index; the mailbox "timestamp".
    pub frame_id: u32,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub codec: Codec,
    pub payload_len: u32,
}

impl TileHeader {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.width, self.height)
    }

    fn check(&self) -> Result<(), InvalidTile> {
        if self.width == 0 || self.height == 0 {
            return Err(InvalidTile::Empty);
        }
        if self.codec == Codec::RawRgba8
            && self.payload_len as u64 != self.width as u64 * self.height as u64 * 4
        {
            return Err(InvalidTile::RawLength);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DirectoryEntry {
    pub display_id: u32,
    pub endpoint: Endpoint,
    pub region: Rect,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    QueryInfo,
    InfoReply {
        virtual_width: u32,
        virtual_height: u32,
        mode: Mode,
        session_token: u64,
        frames_in_flight: u32,
        /// Present in dispatcher mode only.
        dispatcher: Option<Endpoint>,
        /// Populated in direct mode only.
        displays: Vec<DirectoryEntry>,
    },
    Register {
        session_token: u64,
        peer_rank: u32,
        peer_count: u32,
    },
    RegisterAck,
    Tile {
        header: TileHeader,
        payload: Vec<u8>,
    },
    DisplayFrameComplete {
        frame_id: u32,
        display_id: u32,
    },
    NextFrameToken {
        frame_id: u32,
    },
    Shutdown,
    Join {
        role: Role,
        index: u32,
    },
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::QueryInfo => tag::QUERY_INFO,
            Message::InfoReply { .. } => tag::INFO_REPLY,
            Message::Register { .. } => tag::REGISTER,
            Message::RegisterAck => tag::REGISTER_ACK,
            Message::Tile { .. } => tag::TILE,
            Message::DisplayFrameComplete { .. } => tag::DISPLAY_FRAME_COMPLETE,
            Message::NextFrameToken { .. } => tag::NEXT_FRAME_TOKEN,
            Message::Shutdown => tag::SHUTDOWN,
            Message::Join { .. } => tag::JOIN,
        }
    }

    /// Builds a tile message, filling `payload_len` from the payload.
    pub fn tile(frame_id: u32, rect: Rect, codec: Codec, payload: Vec<u8>) -> Message {
        Message::Tile {
            header: TileHeader {
                frame_id,
                x: rect.x,
                y: rect.y,
                width: rect.width,
                height: rect.height,
                codec,
                payload_len: payload.len() as u32,
            },
            payload,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum InvalidTile {
    #[error("zero-sized tile")]
    Empty,
    #[error("raw tile payload length is not width*height*4")]
    RawLength,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the 2^31 byte limit")]
    PayloadTooLarge(usize),
    #[error("tile header declares {declared} payload bytes but {actual} are attached")]
    PayloadLength { declared: u32, actual: usize },
    #[error("invalid tile: {0}")]
    InvalidTile(InvalidTile),
    #[error("string field of {0} bytes exceeds 65535")]
    StringTooLong(usize),
    #[error("directory of {0} entries is too large")]
    DirectoryTooLarge(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("frame declares {declared} bytes but {actual} were supplied")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("frame length {0} is outside the accepted range")]
    BadLength(usize),
    #[error("unknown codec {0}")]
    UnknownCodec(u8),
    #[error("unknown mode {0}")]
    UnknownMode(u8),
    #[error("unknown role {0}")]
    UnknownRole(u8),
    #[error("invalid utf-8 in string field")]
    Utf8,
    #[error("invalid tile: {0}")]
    InvalidTile(InvalidTile),
    #[error("tile payload_len {declared} disagrees with body ({actual} bytes)")]
    PayloadLength { declared: u32, actual: usize },
    #[error("{0} trailing bytes after message body")]
    Trailing(usize),
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), EncodeError> {
    let len = u16::try_from(s.len()).map_err(|_| EncodeError::StringTooLong(s.len()))?;
    put_u16(out, len);
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_endpoint(out: &mut Vec<u8>, e: &Endpoint) -> Result<(), EncodeError> {
    put_str(out, &e.host)?;
    put_u16(out, e.port);
    Ok(())
}

fn put_rect(out: &mut Vec<u8>, r: &Rect) {
    put_u32(out, r.x);
    put_u32(out, r.y);
    put_u32(out, r.width);
    put_u32(out, r.height);
}

fn put_tile_header(out: &mut Vec<u8>, h: &TileHeader) {
    put_u32(out, h.frame_id);
    put_u32(out, h.x);
    put_u32(out, h.y);
    put_u32(out, h.width);
    put_u32(out, h.height);
    out.push(h.codec as u8);
    put_u32(out, h.payload_len);
}

/// Serializes one message into a complete length-prefixed frame.
pub fn encode(message: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(encoded_len_hint(message));
    encode_into(message, &mut out)?;
    Ok(out)
}

fn encoded_len_hint(message: &Message) -> usize {
    match message {
        Message::Tile { payload, .. } => LENGTH_PREFIX + 1 + TILE_HEADER_LEN + payload.len(),
        Message::InfoReply { displays, .. } => 64 + displays.len() * 48,
        _ => 32,
    }
}

/// Appends the encoded frame of `message` to `out`.
pub fn encode_into(message: &Message, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let start = out.len();
    put_u32(out, 0);
    out.push(message.tag());
    let written = encode_body(message, out);
    if let Err(e) = written {
        out.truncate(start);
        return Err(e);
    }
    let total = (out.len() - start - LENGTH_PREFIX) as u32;
    out[start..start + LENGTH_PREFIX].copy_from_slice(&total.to_le_bytes());
    Ok(())
}

fn encode_body(message: &Message, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    match message {
        Message::QueryInfo | Message::RegisterAck | Message::Shutdown => {}
        Message::InfoReply {
            virtual_width,
            virtual_height,
            mode,
            session_token,
            frames_in_flight,
            dispatcher,
            displays,
        } => {
            put_u32(out, *virtual_width);
            put_u32(out, *virtual_height);
            out.push(match mode {
                Mode::Dispatcher => 0,
                Mode::Direct => 1,
            });
            put_u64(out, *session_token);
            put_u32(out, *frames_in_flight);
            match dispatcher {
                Some(e) => {
                    out.push(1);
                    put_endpoint(out, e)?;
                }
                None => out.push(0),
            }
            let n = u32::try_from(displays.len())
                .map_err(|_| EncodeError::DirectoryTooLarge(displays.len()))?;
            put_u32(out, n);
            for d in displays {
                put_u32(out, d.display_id);
                put_endpoint(out, &d.endpoint)?;
                put_rect(out, &d.region);
            }
        }
        Message::Register {
            session_token,
            peer_rank,
            peer_count,
        } => {
            put_u64(out, *session_token);
            put_u32(out, *peer_rank);
            put_u32(out, *peer_count);
        }
        Message::Tile { header, payload } => {
            if payload.len() > MAX_PAYLOAD {
                return Err(EncodeError::PayloadTooLarge(payload.len()));
            }
            if header.payload_len as usize != payload.len() {
                return Err(EncodeError::PayloadLength {
                    declared: header.payload_len,
                    actual: payload.len(),
                });
            }
            header.check().map_err(EncodeError::InvalidTile)?;
            put_tile_header(out, header);
            out.extend_from_slice(payload);
        }
        Message::DisplayFrameComplete {
            frame_id,
            display_id,
        } => {
            put_u32(out, *frame_id);
            put_u32(out, *display_id);
        }
        Message::NextFrameToken { frame_id } => put_u32(out, *frame_id),
        Message::Join { role, index } => {
            out.push(*role as u8);
            put_u32(out, *index);
        }
    }
    Ok(())
}

/// Bounds-checked little-endian reader over one message body.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    /// Offset of `buf[0]` within the whole frame, for error reporting.
    base: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(DecodeError::Truncated {
                needed: self.base + self.pos + n,
                available: self.base + self.buf.len(),
            }),
        }
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    fn string(&mut self) -> Result<String, DecodeError> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        core::str::from_utf8(bytes)
            .map(String::from)
            .map_err(|_| DecodeError::Utf8)
    }

    fn endpoint(&mut self) -> Result<Endpoint, DecodeError> {
        let host = self.string()?;
        let port = self.u16()?;
        Ok(Endpoint { host, port })
    }

    fn rect(&mut self) -> Result<Rect, DecodeError> {
        Ok(Rect::new(self.u32()?, self.u32()?, self.u32()?, self.u32()?))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Reads the `total_length` prefix, rejecting zero and oversized frames.
pub fn frame_length(prefix: [u8; LENGTH_PREFIX]) -> Result<usize, DecodeError> {
    let len = u32::from_le_bytes(prefix) as usize;
    if len == 0 || len > MAX_FRAME_LEN {
        return Err(DecodeError::BadLength(len));
    }
    Ok(len)
}

/// Decodes one complete frame (length prefix included). The slice must hold
/// exactly the declared number of bytes.
pub fn decode(frame: &[u8]) -> Result<Message, DecodeError> {
    if frame.len() < LENGTH_PREFIX {
        return Err(DecodeError::Truncated {
            needed: LENGTH_PREFIX,
            available: frame.len(),
        });
    }
    let declared = frame_length([frame[0], frame[1], frame[2], frame[3]])?;
    let actual = frame.len() - LENGTH_PREFIX;
    if actual < declared {
        return Err(DecodeError::Truncated {
            needed: LENGTH_PREFIX + declared,
            available: frame.len(),
        });
    }
    if actual > declared {
        return Err(DecodeError::LengthMismatch { declared, actual });
    }
    decode_body(&frame[LENGTH_PREFIX..])
}

/// Decodes the tag and body that follow a length prefix. Never reads
/// beyond `body`.
pub fn decode_body(body: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader {
        buf: body,
        pos: 0,
        base: LENGTH_PREFIX,
    };
    let tag = r.u8()?;
    let msg = match tag {
        tag::QUERY_INFO => Message::QueryInfo,
        tag::REGISTER_ACK => Message::RegisterAck,
        tag::SHUTDOWN => Message::Shutdown,
        tag::INFO_REPLY => {
            let virtual_width = r.u32()?;
            let virtual_height = r.u32()?;
            let mode = match r.u8()? {
                0 => Mode::Dispatcher,
                1 => Mode::Direct,
                m => return Err(DecodeError::UnknownMode(m)),
            };
            let session_token = r.u64()?;
            let frames_in_flight = r.u32()?;
            let dispatcher = match r.u8()? {
                0 => None,
                _ => Some(r.endpoint()?),
            };
            let n = r.u32()? as usize;
            // each entry is at least 4 + 2 + 2 + 16 bytes
            if n > r.remaining() / 24 {
                return Err(DecodeError::Truncated {
                    needed: LENGTH_PREFIX + r.pos + n * 24,
                    available: LENGTH_PREFIX + body.len(),
                });
            }
            let mut displays = Vec::with_capacity(n);
            for _ in 0..n {
                displays.push(DirectoryEntry {
                    display_id: r.u32()?,
                    endpoint: r.endpoint()?,
                    region: r.rect()?,
                });
            }
            Message::InfoReply {
                virtual_width,
                virtual_height,
                mode,
                session_token,
                frames_in_flight,
                dispatcher,
                displays,
            }
        }
        tag::REGISTER => Message::Register {
            session_token: r.u64()?,
            peer_rank: r.u32()?,
            peer_count: r.u32()?,
        },
        tag::TILE => {
            let header = read_tile_header(&mut r)?;
            let payload = r.take(header.payload_len as usize)?.to_vec();
            Message::Tile { header, payload }
        }
        tag::DISPLAY_FRAME_COMPLETE => Message::DisplayFrameComplete {
            frame_id: r.u32()?,
            display_id: r.u32()?,
        },
        tag::NEXT_FRAME_TOKEN => Message::NextFrameToken { frame_id: r.u32()? },
        tag::JOIN => {
            let role = match r.u8()? {
                0 => Role::Display,
                1 => Role::Dispatcher,
                v => return Err(DecodeError::UnknownRole(v)),
            };
            Message::Join {
                role,
                index: r.u32()?,
            }
        }
        other => return Err(DecodeError::UnknownTag(other)),
    };
    if r.remaining() != 0 {
        return Err(DecodeError::Trailing(r.remaining()));
    }
    Ok(msg)
}

fn read_tile_header(r: &mut Reader<'_>) -> Result<TileHeader, DecodeError> {
    let frame_id = r.u32()?;
    let x = r.u32()?;
    let y = r.u32()?;
    let width = r.u32()?;
    let height = r.u32()?;
    let codec_byte = r.u8()?;
    let codec = Codec::from_u8(codec_byte).ok_or(DecodeError::UnknownCodec(codec_byte))?;
    let payload_len = r.u32()?;
    let header = TileHeader {
        frame_id,
        x,
        y,
        width,
        height,
        codec,
        payload_len,
    };
    header.check().map_err(DecodeError::InvalidTile)?;
    Ok(header)
}

/// Reads the routing header of a tile frame or body without copying or
/// inspecting the payload. Accepts either a full frame (with length prefix)
/// or a bare body starting at the tag byte, selected by `prefixed`.
pub fn peek_tile_header(bytes: &[u8], prefixed: bool) -> Result<TileHeader, DecodeError> {
    let offset = if prefixed { LENGTH_PREFIX } else { 0 };
    let body = bytes.get(offset..).ok_or(DecodeError::Truncated {
        needed: offset,
        available: bytes.len(),
    })?;
    let mut r = Reader {
        buf: body,
        pos: 0,
        base: offset,
    };
    match r.u8()? {
        tag::TILE => {}
        other => return Err(DecodeError::UnknownTag(other)),
    }
    let header = read_tile_header(&mut r)?;
    if r.remaining() != header.payload_len as usize {
        return Err(DecodeError::PayloadLength {
            declared: header.payload_len,
            actual: r.remaining(),
        });
    }
    Ok(header)
}
