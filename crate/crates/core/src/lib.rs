// SPDX-License-Identifier: Apache-2.0

//! Pure, allocation-only building blocks of the dw2 tiled display wall.
//!
//! Everything here is free of IO and threads so it can be shared between the
//! display service, the client library and tooling, and so it builds for
//! `no_std + alloc` targets. Sockets, JPEG, threads and file formats live in
//! the `dw2` companion crate.

#![no_std]

extern crate alloc;

pub mod config;
pub mod coverage;
pub mod geometry;
pub mod pixels;
pub mod protocol;
pub mod window;

pub use config::{ConfigError, DisplaySpec, Endpoint, Mode, WallConfig};
pub use coverage::{CoverageMask, DisplayFramebuffer, WriteError};
pub use geometry::{GeometryError, Rect, WallGeometry};
pub use pixels::{PixelBuffer, PixelError};
pub use protocol::{Codec, DecodeError, DirectoryEntry, EncodeError, Message, Role, TileHeader};
pub use window::{Completion, TokenWindow};
