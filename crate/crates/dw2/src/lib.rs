// SPDX-License-Identifier: Apache-2.0

//! dw2: drive a tiled display wall as one virtual framebuffer.
//!
//! The wall side runs a [`service`]: a coordinator that hands out wall
//! information and frame tokens, one display process per monitor, and in
//! dispatcher mode a head process that forwards tiles by header. Renderers
//! use the [`client`] library to query the wall, join a session and stream
//! RGBA tiles, which are JPEG-compressed and routed either to the dispatcher
//! or straight to the displays they overlap.
//!
//! Pure geometry, wire format and accounting live in [`dw2_core`].

pub mod bench;
pub mod client;
pub mod codec;
pub mod config;
pub mod ffi;
pub mod images;
pub mod mailbox;
pub mod service;
pub mod socket_group;

pub use dw2_core as core;
pub use dw2_core::{Codec, Endpoint, Message, Mode, PixelBuffer, Rect, WallConfig};
